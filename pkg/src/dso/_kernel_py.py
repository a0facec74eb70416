"""Pure numpy stack machine for perturbation programs.

Fallback for the compiled extension.  Every operation is element-wise and
out-of-place, so the result is bit-identical to the compiled kernel.
"""

import numpy as np

from ._program import OP_ABS, OP_ADD, OP_AVG2, OP_MUL, OP_NEG, OP_PDIV, OP_SUB, PDIV_EPS

KERNEL_NAME = "pure"


def eval_program(codes, slots, max_stack):
    # evolved firmware can legitimately overflow; faults are trapped upstream
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _eval(codes, slots)


def _eval(codes, slots):
    stack = []
    for c in codes:
        if c >= 0:
            stack.append(slots[c])
        elif c == OP_ABS:
            stack[-1] = np.abs(stack[-1])
        elif c == OP_NEG:
            stack[-1] = -stack[-1]
        else:
            b = stack.pop()
            a = stack[-1]
            if c == OP_ADD:
                stack[-1] = a + b
            elif c == OP_SUB:
                stack[-1] = a - b
            elif c == OP_MUL:
                stack[-1] = a * b
            elif c == OP_AVG2:
                stack[-1] = (a + b) * 0.5
            elif c == OP_PDIV:
                out = np.array(a, copy=True)
                # ~(|b| < eps) rather than >= so that NaN denominators divide,
                # matching the compiled kernel's fabs(b) < eps test.
                np.divide(a, b, out=out, where=~(np.abs(b) < PDIV_EPS))
                stack[-1] = out
            else:
                raise ValueError(f"bad opcode {c}")
    if len(stack) != 1:
        raise ValueError("malformed program: stack depth != 1 at end")
    return np.array(stack[0], copy=True)
