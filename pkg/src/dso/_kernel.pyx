# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stack machine for perturbation programs.

Executes the postfix opcode array produced by firmware compilation over the
materialized terminal slots.  All operations are element-wise IEEE double
arithmetic, identical to the numpy fallback in _kernel_py.
"""

import numpy as np

from libc.math cimport fabs

KERNEL_NAME = "compiled"

# Mirrors of dso._program constants; test_backends asserts they match.
DEF OP_ADD = -1
DEF OP_SUB = -2
DEF OP_MUL = -3
DEF OP_PDIV = -4
DEF OP_AVG2 = -5
DEF OP_ABS = -6
DEF OP_NEG = -7
DEF PDIV_EPS = 1e-12

OPCODES = {
    "+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "pdiv": OP_PDIV,
    "avg2": OP_AVG2, "abs": OP_ABS, "neg": OP_NEG,
}
PDIV_EPSILON = PDIV_EPS


def eval_program(const long long[::1] codes, const double[:, :, ::1] slots, Py_ssize_t max_stack):
    cdef Py_ssize_t n = slots.shape[1]
    cdef Py_ssize_t dim = slots.shape[2]
    buf = np.empty((max_stack, n, dim), dtype=np.float64)
    cdef double[:, :, ::1] st = buf
    cdef Py_ssize_t sp = 0
    cdef Py_ssize_t t, i, j
    cdef long long c
    cdef double a, b
    for t in range(codes.shape[0]):
        c = codes[t]
        if c >= 0:
            for i in range(n):
                for j in range(dim):
                    st[sp, i, j] = slots[c, i, j]
            sp += 1
        elif c == OP_ABS:
            for i in range(n):
                for j in range(dim):
                    st[sp - 1, i, j] = fabs(st[sp - 1, i, j])
        elif c == OP_NEG:
            for i in range(n):
                for j in range(dim):
                    st[sp - 1, i, j] = -st[sp - 1, i, j]
        elif c == OP_ADD:
            for i in range(n):
                for j in range(dim):
                    st[sp - 2, i, j] = st[sp - 2, i, j] + st[sp - 1, i, j]
            sp -= 1
        elif c == OP_SUB:
            for i in range(n):
                for j in range(dim):
                    st[sp - 2, i, j] = st[sp - 2, i, j] - st[sp - 1, i, j]
            sp -= 1
        elif c == OP_MUL:
            for i in range(n):
                for j in range(dim):
                    st[sp - 2, i, j] = st[sp - 2, i, j] * st[sp - 1, i, j]
            sp -= 1
        elif c == OP_AVG2:
            for i in range(n):
                for j in range(dim):
                    st[sp - 2, i, j] = (st[sp - 2, i, j] + st[sp - 1, i, j]) * 0.5
            sp -= 1
        elif c == OP_PDIV:
            for i in range(n):
                for j in range(dim):
                    a = st[sp - 2, i, j]
                    b = st[sp - 1, i, j]
                    st[sp - 2, i, j] = a if fabs(b) < PDIV_EPS else a / b
            sp -= 1
        else:
            raise ValueError(f"bad opcode {c}")
    if sp != 1:
        raise ValueError("malformed program: stack depth != 1 at end")
    return np.array(buf[0], copy=True)
