"""Perturbation firmware: the executable movement scheme of a drone team.

A firmware is a small expression tree that always follows the pattern

    trial = departure + offset

where the departure is a single coordinate terminal (a point the drone moves
from) and the offset is an arbitrary expression over terminals and
element-wise functions (the movement applied to it).  Firmware is written as
an s-expression, e.g. the classic differential mutation

    (+ PermCBC (* C1 (- PermCBC PermCBC)))

or the distribution-sampling scheme ``(+ MVNS Step)``.  The command center
evolves firmware online by random subtree replacement; this module supplies
parsing, serialization, structural validation, mutation and evaluation.

Evaluation semantics
--------------------
All operations are element-wise over length-``dim`` coordinate vectors;
scalars broadcast.  Stochastic terminals draw fresh values from the context's
random stream per occurrence, per drone, in left-to-right depth-first order.
``evaluate`` produces one drone's trial vector; ``evaluate_team`` produces
the whole team's matrix and is defined to consume the stream exactly as
evaluating drones 0..N-1 one after another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._program import OP_BY_SYMBOL, PDIV_EPS, Program, UNARY_OPS

# --------------------------------------------------------------------------
# Alphabet

#: Terminals allowed in the departure slot (the left child of the root sum).
DEPARTURE_TERMINALS = ("CBCd", "PermCBC", "PBestCBC", "MVNS", "OppCBC")

#: Terminals available only inside the offset expression.  The offset may
#: additionally use every departure terminal (CBCd appears in both roles).
OFFSET_ONLY_TERMINALS = (
    "GBC", "Shift", "Step", "matInterval",
    "C1", "C2", "C3",
    "U01", "U051", "G01", "absG0501", "absG0001",
)

ALL_TERMINALS = DEPARTURE_TERMINALS + OFFSET_ONLY_TERMINALS

#: Terminals whose value involves a random draw.  Everything else is a pure
#: function of the evaluation context, which matters for the duplicate
#: argument rule: (- Shift Shift) is always zero, (- G01 G01) is not.
STOCHASTIC_TERMINALS = frozenset({
    "PermCBC", "PBestCBC", "MVNS", "Step",
    "U01", "U051", "G01", "absG0501", "absG0001",
})

UNARY_FUNCTIONS = ("abs", "neg")
BINARY_FUNCTIONS = ("+", "-", "*", "pdiv", "avg2")
FUNCTION_ARITY = {**{s: 1 for s in UNARY_FUNCTIONS}, **{s: 2 for s in BINARY_FUNCTIONS}}

RAND1_TEXT = "(+ PermCBC (* C1 (- PermCBC PermCBC)))"
MVNS_STEP_TEXT = "(+ MVNS Step)"


# --------------------------------------------------------------------------
# Tree structure

@dataclass(frozen=True)
class Node:
    """One tree node: a terminal (no children) or an element-wise function."""

    symbol: str
    children: tuple["Node", ...] = ()

    @property
    def is_terminal(self) -> bool:
        return not self.children


def iter_nodes(node: Node):
    """Pre-order walk."""
    yield node
    for child in node.children:
        yield from iter_nodes(child)


def is_deterministic(node: Node) -> bool:
    return all(n.symbol not in STOCHASTIC_TERMINALS
               for n in iter_nodes(node) if n.is_terminal)


class FirmwareError(ValueError):
    """Base class for firmware parsing and validation failures."""


class SexprSyntaxError(FirmwareError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownSymbolError(SexprSyntaxError):
    pass


class PatternError(FirmwareError):
    """The tree does not follow the departure+offset root pattern."""


# --------------------------------------------------------------------------
# Parsing / serialization

def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def _parse(tokens, i: int, end: int):
    if i >= len(tokens):
        raise SexprSyntaxError("unexpected end of input", end)
    tok, pos = tokens[i]
    if tok == ")":
        raise SexprSyntaxError("unexpected ')'", pos)
    if tok != "(":
        if tok not in ALL_TERMINALS:
            raise UnknownSymbolError(f"unknown terminal {tok!r}", pos)
        return Node(tok), i + 1
    if i + 1 >= len(tokens):
        raise SexprSyntaxError("unclosed '('", pos)
    sym, sym_pos = tokens[i + 1]
    if sym in ("(", ")"):
        raise SexprSyntaxError("expected a function symbol after '('", sym_pos)
    arity = FUNCTION_ARITY.get(sym)
    if arity is None:
        raise UnknownSymbolError(f"unknown function {sym!r}", sym_pos)
    i += 2
    children = []
    for _ in range(arity):
        child, i = _parse(tokens, i, end)
        children.append(child)
    if i >= len(tokens):
        raise SexprSyntaxError(f"unclosed '(' for {sym!r}", pos)
    closer, closer_pos = tokens[i]
    if closer != ")":
        raise SexprSyntaxError(f"{sym!r} takes {arity} argument(s); expected ')'", closer_pos)
    return Node(sym, tuple(children)), i + 1


def parse_expr(text: str) -> Node:
    """Parse an s-expression over the firmware alphabet into a raw tree.

    No pattern checking; use ``parse_firmware`` for valid firmware.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise SexprSyntaxError("empty input", 0)
    node, i = _parse(tokens, 0, len(text))
    if i != len(tokens):
        raise SexprSyntaxError("trailing input after expression", tokens[i][1])
    return node


def serialize(item) -> str:
    """Canonical s-expression text; ``parse`` of it rebuilds the same tree."""
    node = item.root if isinstance(item, Firmware) else item
    if node.is_terminal:
        return node.symbol
    inner = " ".join(serialize(c) for c in node.children)
    return f"({node.symbol} {inner})"


# --------------------------------------------------------------------------
# Firmware object

@dataclass(eq=False)
class Firmware:
    """A perturbation tree plus bookkeeping flags.

    ``fixed`` firmware is never replaced by the command center; ``reference``
    firmware (the hand-picked initial schemes) is exempt from the size rule.
    Treat instances as immutable: mutation always builds a new Firmware.
    """

    root: Node
    label: str = ""
    fixed: bool = False
    reference: bool = False
    _program: Program | None = field(default=None, repr=False)

    @property
    def departure(self) -> Node:
        return self.root.children[0]

    @property
    def offset(self) -> Node:
        return self.root.children[1]

    def program(self) -> Program:
        if self._program is None:
            self._program = compile_tree(self.root)
        return self._program


def _check_pattern(root: Node) -> None:
    if root.symbol != "+" or len(root.children) != 2:
        raise PatternError(f"root of {serialize(root)!r} is not a two-argument sum")
    dep = root.children[0]
    if not (dep.is_terminal and dep.symbol in DEPARTURE_TERMINALS):
        raise PatternError(f"{serialize(dep)!r} is not a departure terminal")


def parse_firmware(text: str, label: str = "", fixed: bool = False,
                   reference: bool = False) -> Firmware:
    """Parse and pattern-check firmware text.

    Raises ``SexprSyntaxError``/``UnknownSymbolError`` on malformed input and
    ``PatternError`` when the root is not departure+offset.
    """
    root = parse_expr(text)
    _check_pattern(root)
    return Firmware(root, label=label, fixed=fixed, reference=reference)


def reference_firmware() -> list[Firmware]:
    """The initial team firmware: fixed rand/1 plus replaceable MVNS+Step."""
    return [
        parse_firmware(RAND1_TEXT, label="rand/1", fixed=True, reference=True),
        parse_firmware(MVNS_STEP_TEXT, label="MVNS+Step", reference=True),
    ]


def tree_size(item) -> int:
    """Number of nodes, root sum and departure terminal included."""
    node = item.root if isinstance(item, Firmware) else item
    return sum(1 for _ in iter_nodes(node))


def validate(fw: Firmware, *, s_min: int = 5, s_max: int = 20,
             base: Firmware | None = None) -> list[str]:
    """Structural rule check; empty list means the firmware is acceptable.

    Checks, in order: known symbols and arities, the departure+offset root
    pattern, the size bounds s_min < size < s_max (skipped for reference
    firmware), syntactic difference from ``base`` when given, and the ban on
    binary nodes whose two arguments are identical deterministic subtrees.
    """
    issues = []
    for node in iter_nodes(fw.root):
        if node.is_terminal:
            if node.symbol not in ALL_TERMINALS:
                issues.append(f"unknown terminal {node.symbol!r}")
        else:
            arity = FUNCTION_ARITY.get(node.symbol)
            if arity is None:
                issues.append(f"unknown function {node.symbol!r}")
            elif arity != len(node.children):
                issues.append(f"{node.symbol!r} applied to {len(node.children)} arguments")
    try:
        _check_pattern(fw.root)
    except PatternError as exc:
        issues.append(str(exc))
    if not fw.reference:
        size = tree_size(fw)
        if not (s_min < size < s_max):
            issues.append(f"size {size} outside ({s_min}, {s_max})")
    if base is not None and serialize(fw.root) == serialize(base.root):
        issues.append("syntactically identical to its base")
    for node in iter_nodes(fw.root):
        if len(node.children) == 2 and node.children[0] == node.children[1] \
                and is_deterministic(node.children[0]):
            issues.append(f"duplicate deterministic argument {serialize(node.children[0])!r}")
    return issues


# --------------------------------------------------------------------------
# Mutation

_GROW_FUNCTIONS = UNARY_FUNCTIONS + BINARY_FUNCTIONS
GROW_MAX_DEPTH = 4
GROW_P_TERMINAL = 0.5


def _grow(rng, depth: int = 0) -> Node:
    if depth >= GROW_MAX_DEPTH or rng.random() < GROW_P_TERMINAL:
        return Node(ALL_TERMINALS[rng.integers(len(ALL_TERMINALS))])
    sym = _GROW_FUNCTIONS[rng.integers(len(_GROW_FUNCTIONS))]
    children = tuple(_grow(rng, depth + 1) for _ in range(FUNCTION_ARITY[sym]))
    return Node(sym, children)


def _paths(node: Node, prefix: tuple[int, ...] = ()):
    """Pre-order paths of every node below ``node`` (the node itself excluded)."""
    for i, child in enumerate(node.children):
        yield prefix + (i,)
        yield from _paths(child, prefix + (i,))


def _replace(node: Node, path: tuple[int, ...], new: Node) -> Node:
    if not path:
        return new
    children = list(node.children)
    children[path[0]] = _replace(children[path[0]], path[1:], new)
    return Node(node.symbol, tuple(children))


def mutate_variant(base: Firmware, rng, *, s_min: int = 5, s_max: int = 20,
                   max_attempts: int = 50) -> Firmware:
    """Random subtree replacement of ``base`` satisfying the variant rules.

    The mutation point is drawn uniformly over all non-root nodes; hitting
    the departure slot swaps in a uniformly drawn departure terminal, any
    other point is replaced by a freshly grown subtree.  Candidates violating
    the structural rules (size bounds, difference from base, duplicate
    deterministic arguments, root pattern) are retried; after
    ``max_attempts`` failures the whole offset is regrown from scratch until
    a legal variant appears.  Protection of fixed firmware is the caller's
    job.
    """
    for _ in range(max_attempts):
        paths = list(_paths(base.root))
        path = paths[rng.integers(len(paths))]
        if path == (0,):
            sub = Node(DEPARTURE_TERMINALS[rng.integers(len(DEPARTURE_TERMINALS))])
        else:
            sub = _grow(rng)
        cand = Firmware(_replace(base.root, path, sub), label="evolved")
        if not validate(cand, s_min=s_min, s_max=s_max, base=base):
            return cand
    while True:
        dep = Node(DEPARTURE_TERMINALS[rng.integers(len(DEPARTURE_TERMINALS))])
        cand = Firmware(Node("+", (dep, _grow(rng))), label="evolved")
        if not validate(cand, s_min=s_min, s_max=s_max, base=base):
            return cand


# --------------------------------------------------------------------------
# Evaluation context and terminal semantics

@dataclass
class EvalContext:
    """Squadron data a firmware evaluation reads.

    ``cbc``/``cbofv`` are the current best coordinates and values (one row
    per drone index), ``gbc`` the global best, ``prev_tmc`` the evaluating
    team's previous trial coordinates (zeros before its first move).  The
    arrays are treated as fixed for the lifetime of the context; ``drone``
    selects the row used by per-drone evaluation and may be reassigned.
    """

    cbc: np.ndarray
    cbofv: np.ndarray
    gbc: np.ndarray
    prev_tmc: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c1: float
    c2: float
    c3: float
    p_best_fraction: float
    rng: np.random.Generator
    drone: int = 0
    mat_interval: np.ndarray = field(init=False)
    _mvns_stats: tuple | None = field(default=None, repr=False)
    _step_sigma: float | None = field(default=None, repr=False)
    _pbest_order: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        with np.errstate(over="ignore"):
            self.mat_interval = self.ub - self.lb
        if np.any(self.mat_interval < 0):
            raise ValueError("upper bound below lower bound")

    def pbest_order(self) -> np.ndarray:
        if self._pbest_order is None:
            self._pbest_order = np.argsort(self.cbofv, kind="stable")
        return self._pbest_order

    def mvns_stats(self):
        if self._mvns_stats is None:
            k = _pbest_count_ceil(self.p_best_fraction, len(self.cbofv))
            rows = self.cbc[self.pbest_order()[:k]]
            self._mvns_stats = _mvns_mean_chol(rows, self.mat_interval)
        return self._mvns_stats

    def step_sigma(self) -> float:
        if self._step_sigma is None:
            k = _pbest_count_round(self.p_best_fraction, len(self.cbofv))
            rows = self.cbc[self.pbest_order()[:k]]
            self._step_sigma = _step_sigma(rows)
        return self._step_sigma


def _pbest_count_ceil(fraction: float, n: int) -> int:
    return max(2, math.ceil(fraction * n))


def _pbest_count_round(fraction: float, n: int) -> int:
    return max(2, round(fraction * n))


def _mvns_mean_chol(rows: np.ndarray, mat_interval: np.ndarray):
    mean = rows.mean(axis=0)
    cov = np.atleast_2d(np.cov(rows, rowvar=False))
    jitter = 1e-12 * float(np.mean(mat_interval)) ** 2
    dim = cov.shape[0]
    while True:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(dim))
            return mean, chol
        except np.linalg.LinAlgError:
            # degenerate sample and vanishing interval; escalate until it factors
            jitter = max(jitter * 10.0, 1e-300)


def effective_mass(weights) -> float:
    """1 / sum(w^2) for normalized selection weights; 2 for w = (1/2, 1/2)."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def _log_weights(count: int) -> np.ndarray:
    w = np.log(count + 0.5) - np.log(np.arange(1, count + 1))
    return w / w.sum()


def _step_sigma(rows: np.ndarray) -> float:
    mu = rows.mean(axis=0)
    return 0.04 * effective_mass(_log_weights(len(rows))) * float(np.linalg.norm(mu))


def opposition(row, lb, ub):
    """Opposite point of ``row`` inside the box: lb + ub - row."""
    return (lb + ub) - np.asarray(row, dtype=float)


def mvns_sample(cbc, cbofv, p_best_fraction, mat_interval, rng) -> np.ndarray:
    """One multivariate-normal draw around the best fraction of solutions.

    Mean and sample covariance come from the best ``ceil(fraction * N)``
    rows (at least 2); the covariance diagonal is lifted by
    ``1e-12 * mean(mat_interval)**2`` so degenerate samples still factor.
    """
    order = np.argsort(np.asarray(cbofv, dtype=float), kind="stable")
    k = _pbest_count_ceil(p_best_fraction, len(order))
    mean, chol = _mvns_mean_chol(np.asarray(cbc, dtype=float)[order[:k]],
                                 np.asarray(mat_interval, dtype=float))
    return mean + chol @ rng.standard_normal(len(mean))


def step_offset(cbc, cbofv, mat_interval, p_best_fraction, rng) -> np.ndarray:
    """One drone's row of the scaled-Gaussian step offset.

    sigma * g * mat_interval * u with g a per-component standard normal
    vector and u a scalar U(0, 0.5) draw; sigma = 0.04 * mu_eff * ||mu||
    with mu the plain mean of the best ``max(2, round(fraction * N))`` rows
    and mu_eff the effective mass of the standard logarithmic weights.
    """
    cbc = np.asarray(cbc, dtype=float)
    order = np.argsort(np.asarray(cbofv, dtype=float), kind="stable")
    k = _pbest_count_round(p_best_fraction, len(order))
    sigma = _step_sigma(cbc[order[:k]])
    g = rng.standard_normal(cbc.shape[1])
    u = rng.uniform(0.0, 0.5)
    return sigma * g * np.asarray(mat_interval, dtype=float) * u


def protected_div(a, b):
    """Element-wise a / b, passing the numerator through where |b| < 1e-12."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.true_divide(a, b)
    out = np.where(np.abs(b) < PDIV_EPS, a, quot)
    return float(out) if out.ndim == 0 else out


def _terminal_value(sym: str, ctx: EvalContext, d: int):
    """One terminal occurrence for drone ``d``; draws from ctx.rng if stochastic."""
    if sym == "CBCd":
        return ctx.cbc[d]
    if sym == "GBC":
        return ctx.gbc
    if sym == "Shift":
        return ctx.prev_tmc[d] - ctx.cbc[d]
    if sym == "matInterval":
        return ctx.mat_interval
    if sym == "OppCBC":
        return (ctx.lb + ctx.ub) - ctx.cbc[d]
    if sym == "C1":
        return ctx.c1
    if sym == "C2":
        return ctx.c2
    if sym == "C3":
        return ctx.c3
    if sym == "PermCBC":
        perm = ctx.rng.permutation(len(ctx.cbc))
        return ctx.cbc[perm[d]]
    if sym == "PBestCBC":
        k = max(1, math.ceil(ctx.p_best_fraction * len(ctx.cbofv)))
        return ctx.cbc[ctx.pbest_order()[ctx.rng.integers(k)]]
    if sym == "MVNS":
        mean, chol = ctx.mvns_stats()
        return mean + chol @ ctx.rng.standard_normal(len(mean))
    if sym == "Step":
        g = ctx.rng.standard_normal(ctx.cbc.shape[1])
        u = ctx.rng.uniform(0.0, 0.5)
        return ctx.step_sigma() * g * ctx.mat_interval * u
    if sym == "U01":
        return ctx.rng.uniform(0.0, 1.0)
    if sym == "U051":
        return ctx.rng.uniform(0.5, 1.0)
    if sym == "G01":
        return ctx.rng.standard_normal()
    if sym == "absG0501":
        return abs(0.5 + 0.1 * ctx.rng.standard_normal())
    if sym == "absG0001":
        return abs(0.01 * ctx.rng.standard_normal())
    raise UnknownSymbolError(f"unknown terminal {sym!r}", 0)


_FUNCTION_EVAL = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "pdiv": protected_div,
    "avg2": lambda a, b: (a + b) * 0.5,
    "abs": np.abs,
    "neg": lambda a: -a,
}


def _eval_node(node: Node, ctx: EvalContext, d: int):
    if node.is_terminal:
        return _terminal_value(node.symbol, ctx, d)
    args = [_eval_node(c, ctx, d) for c in node.children]
    return _FUNCTION_EVAL[node.symbol](*args)


def evaluate(fw, ctx: EvalContext) -> np.ndarray:
    """Trial coordinates for drone ``ctx.drone``: departure(ctx) + offset(ctx).

    Accepts a Firmware or a raw tree.  Non-finite results are returned as-is;
    the squadron treats them as an evaluation fault and scores the trial as
    worst possible.
    """
    root = fw.root if isinstance(fw, Firmware) else fw
    with np.errstate(over="ignore", invalid="ignore"):
        value = np.asarray(_eval_node(root, ctx, ctx.drone), dtype=float)
    dim = ctx.cbc.shape[1]
    if value.ndim == 0:
        return np.full(dim, float(value))
    return np.array(value, copy=True)


# --------------------------------------------------------------------------
# Team-level evaluation through the kernel backend

def compile_tree(root: Node) -> Program:
    codes: list[int] = []
    syms: list[str] = []

    def emit(node: Node) -> None:
        if node.is_terminal:
            codes.append(len(syms))
            syms.append(node.symbol)
            return
        for child in node.children:
            emit(child)
        codes.append(OP_BY_SYMBOL[node.symbol])

    emit(root)
    depth = max_depth = 0
    for c in codes:
        if c >= 0:
            depth += 1
            max_depth = max(max_depth, depth)
        elif c not in UNARY_OPS:
            depth -= 1
    return Program(np.asarray(codes, dtype=np.int64), tuple(syms), max_depth)


_DETERMINISTIC_MATRIX = {
    "CBCd": lambda ctx: ctx.cbc,
    "GBC": lambda ctx: np.broadcast_to(ctx.gbc, ctx.cbc.shape),
    "Shift": lambda ctx: ctx.prev_tmc - ctx.cbc,
    "matInterval": lambda ctx: np.broadcast_to(ctx.mat_interval, ctx.cbc.shape),
    "OppCBC": lambda ctx: (ctx.lb + ctx.ub) - ctx.cbc,
    "C1": lambda ctx: ctx.c1,
    "C2": lambda ctx: ctx.c2,
    "C3": lambda ctx: ctx.c3,
}


def materialize_slots(program: Program, ctx: EvalContext) -> np.ndarray:
    """Terminal values for all drones, drawing the stream drone-major.

    Deterministic slots are filled with vectorized expressions that match the
    per-drone forms element-wise; stochastic slots draw per drone in slot
    order, which is exactly the order sequential ``evaluate`` calls would use.
    """
    n, dim = ctx.cbc.shape
    slots = np.empty((len(program.slot_syms), n, dim), dtype=np.float64)
    stochastic = []
    for k, sym in enumerate(program.slot_syms):
        if sym in STOCHASTIC_TERMINALS:
            stochastic.append((k, sym))
        else:
            slots[k] = _DETERMINISTIC_MATRIX[sym](ctx)
    for d in range(n):
        for k, sym in stochastic:
            slots[k, d, :] = _terminal_value(sym, ctx, d)
    return slots


def evaluate_team(fw: Firmware, ctx: EvalContext) -> np.ndarray:
    """Trial coordinates for every drone of a team, shape (drones, dim)."""
    program = fw.program()
    slots = materialize_slots(program, ctx)
    return backend.eval_program(program, slots)
