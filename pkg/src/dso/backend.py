"""Selects the program-evaluation kernel at import time.

The compiled extension is used when it was built; otherwise the numpy
fallback takes over.  Set ``DSO_KERNEL=pure`` or ``DSO_KERNEL=compiled`` to
force a backend ("compiled" raises if the extension is missing).  Both
kernels produce bit-identical output, so the choice only affects speed.
"""

import os

import numpy as np

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

_KERNELS = {"pure": _kernel_py}
if _compiled is not None:
    _KERNELS["compiled"] = _compiled


def _select():
    choice = os.environ.get("DSO_KERNEL", "auto").strip().lower() or "auto"
    if choice == "auto":
        return _compiled if _compiled is not None else _kernel_py
    if choice not in ("pure", "compiled"):
        raise ValueError(f"DSO_KERNEL must be 'pure', 'compiled' or 'auto', got {choice!r}")
    if choice == "compiled" and _compiled is None:
        raise ImportError("DSO_KERNEL=compiled but the dso._kernel extension is not built")
    return _KERNELS[choice]


_active = _select()


def kernel_name() -> str:
    return _active.KERNEL_NAME


def compiled_available() -> bool:
    return _compiled is not None


def get_kernel(name: str):
    """Kernel module by name, for parity tests and benchmarks."""
    try:
        return _KERNELS[name]
    except KeyError:
        raise KeyError(f"kernel {name!r} not available (built: {sorted(_KERNELS)})") from None


def eval_program(program, slots: np.ndarray) -> np.ndarray:
    """Run a compiled perturbation program over materialized slot values."""
    return _active.eval_program(program.codes, slots, program.max_stack)
