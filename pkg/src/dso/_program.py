"""Flattened postfix form of a perturbation tree.

Firmware trees are interpreted thousands of times per run, so before a team
evaluates its firmware the tree is compiled once into a postfix opcode array
plus a list of terminal slots.  The slot values are materialized as one
``(n_slots, drones, dim)`` array and the opcode array is then executed by a
stack machine: either the compiled extension (``dso._kernel``) or the numpy
fallback (``dso._kernel_py``).  Both backends apply the same element-wise
operations, so they produce bit-identical results.
"""

from dataclasses import dataclass

import numpy as np

# Opcodes are negative so that any non-negative code means "push slot k".
OP_ADD = -1
OP_SUB = -2
OP_MUL = -3
OP_PDIV = -4
OP_AVG2 = -5
OP_ABS = -6
OP_NEG = -7

OP_BY_SYMBOL = {
    "+": OP_ADD,
    "-": OP_SUB,
    "*": OP_MUL,
    "pdiv": OP_PDIV,
    "avg2": OP_AVG2,
    "abs": OP_ABS,
    "neg": OP_NEG,
}

UNARY_OPS = frozenset({OP_ABS, OP_NEG})

# Denominators smaller than this in magnitude make pdiv pass the numerator
# through.  Mirrored as a literal in _kernel.pyx; test_backends checks both
# stay in sync.
PDIV_EPS = 1e-12


@dataclass(frozen=True)
class Program:
    """Postfix opcodes, terminal slot symbols in draw order, stack bound."""

    codes: np.ndarray
    slot_syms: tuple[str, ...]
    max_stack: int
