"""Box-constrained test objectives with known, shifted optima.

Desk-scale stand-ins for the usual competition functions: each is evaluated
on z = x - shift (plus the optimum-at-one change of variable for rosenbrock)
so the global optimum sits at the shift vector with value ``bias`` exactly.
An optional square ``transform`` matrix is applied to z before the raw
function, so externally supplied rotation data can be plugged in later.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: Half-width of the canonical symmetric box per function.
BOUND_HALF_WIDTH = {
    "sphere": 100.0,
    "schwefel12": 100.0,
    "elliptic": 100.0,
    "rosenbrock": 100.0,
    "rastrigin": 5.0,
    "ackley": 32.0,
    "griewank": 600.0,
}

SUITE_FUNCTIONS = tuple(BOUND_HALF_WIDTH)

#: Error below which a run counts as successful.
SUCCESS_THRESHOLD = 1e-9

# exp(1.0) is used instead of the e constant inside ackley so the value at
# the optimum cancels to exactly zero.
_E_UNIT = float(np.exp(1.0))


def _sphere(z):
    return (z**2).sum(axis=1)


def _schwefel12(z):
    return (np.cumsum(z, axis=1) ** 2).sum(axis=1)


def _elliptic(z):
    dim = z.shape[1]
    exponents = np.arange(dim) / (dim - 1) if dim > 1 else np.zeros(1)
    return ((1e6**exponents) * z**2).sum(axis=1)


def _rosenbrock(z):
    y = z + 1.0
    return (100.0 * (y[:, 1:] - y[:, :-1] ** 2) ** 2 + (y[:, :-1] - 1.0) ** 2).sum(axis=1)


def _rastrigin(z):
    return (z**2 - 10.0 * np.cos(2.0 * np.pi * z) + 10.0).sum(axis=1)


def _ackley(z):
    dim = z.shape[1]
    # grouped so both parentheses cancel to exactly zero at the optimum
    return 20.0 * (1.0 - np.exp(-0.2 * np.sqrt((z**2).sum(axis=1) / dim))) + (
        _E_UNIT - np.exp(np.cos(2.0 * np.pi * z).sum(axis=1) / dim)
    )


def _griewank(z):
    dim = z.shape[1]
    scale = np.sqrt(np.arange(1, dim + 1))
    return (z**2).sum(axis=1) / 4000.0 - np.cos(z / scale).prod(axis=1) + 1.0


_RAW: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sphere": _sphere,
    "schwefel12": _schwefel12,
    "elliptic": _elliptic,
    "rosenbrock": _rosenbrock,
    "rastrigin": _rastrigin,
    "ackley": _ackley,
    "griewank": _griewank,
}


@dataclass
class Problem:
    name: str
    dim: int
    lb: np.ndarray
    ub: np.ndarray
    shift: np.ndarray
    raw: Callable[[np.ndarray], np.ndarray]
    bias: float = 0.0
    transform: np.ndarray | None = None

    def eval_many(self, xs: np.ndarray) -> np.ndarray:
        """Objective values for a batch of rows; single rows go through here
        too, so batch and scalar evaluation agree bit for bit."""
        z = np.atleast_2d(np.asarray(xs, dtype=float)) - self.shift
        if self.transform is not None:
            z = z @ self.transform.T
        return self.raw(z) + self.bias

    def eval(self, x) -> float:
        return float(self.eval_many(np.asarray(x, dtype=float)[None, :])[0])

    def error(self, x) -> float:
        return self.eval(x) - self.bias


def make_problem(name: str, dim: int, seed: int = 0,
                 shift: np.ndarray | None = None) -> Problem:
    """Suite problem with a deterministic shift drawn from ``seed``.

    The shift is uniform over the central 80% of the box, so it is always
    strictly inside the bounds.  Pass ``shift`` explicitly to reproduce a
    problem exported by ``write_shift``.
    """
    if name not in _RAW:
        raise ValueError(f"unknown function {name!r} (choose from {SUITE_FUNCTIONS})")
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    half = BOUND_HALF_WIDTH[name]
    lb = np.full(dim, -half)
    ub = np.full(dim, half)
    if shift is None:
        rng = np.random.default_rng(seed)
        shift = lb + (ub - lb) * (0.1 + 0.8 * rng.random(dim))
    else:
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (dim,):
            raise ValueError(f"shift has shape {shift.shape}, expected ({dim},)")
    return Problem(name=name, dim=dim, lb=lb, ub=ub, shift=shift, raw=_RAW[name])


def write_shift(problem: Problem, path) -> None:
    np.savetxt(path, problem.shift)


def read_shift(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path))
