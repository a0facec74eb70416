"""Team-level trial generation.

For each drone the team evaluates its firmware to get raw trial coordinates,
optionally recombines them with the drone's current best, measures the
boundary violation of the pre-correction row, corrects it back into the box
and scans the objective.  Recombination and correction methods are drawn
uniformly per drone move; there is no bias among them.

Draw protocol per drone (fixed, so runs replay exactly): firmware draws for
the whole team first (drone-major), then per drone in index order the
recombination method, the CR value, the method's own draws, the correction
method, and the resampling draws for violated components in ascending
component order.  Evaluation faults (non-finite firmware output) skip all of
this: the trial scores +inf, sits on the drone's current best and consumes
no objective evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .firmware import (  # noqa: F401  (re-exported terminal helpers)
    EvalContext,
    Firmware,
    evaluate_team,
    mvns_sample,
    opposition,
    serialize,
    step_offset,
)

RECOMBINATION_METHODS = ("none", "binomial", "exponential")
CORRECTION_METHODS = ("clamp", "reflect", "resample")


@dataclass
class Team:
    """N drones sharing one firmware."""

    team_id: int
    firmware: Firmware
    prev_tmc: np.ndarray
    rank_history: list[float] = field(default_factory=list)
    violation_history: list[float] = field(default_factory=list)

    @classmethod
    def fresh(cls, team_id: int, firmware: Firmware, drones: int, dim: int) -> "Team":
        return cls(team_id, firmware, np.zeros((drones, dim)))

    def install(self, firmware: Firmware) -> None:
        """Swap firmware and reset everything tied to the old one."""
        self.firmware = firmware
        self.prev_tmc = np.zeros_like(self.prev_tmc)
        self.rank_history.clear()
        self.violation_history.clear()


@dataclass
class TrialBatch:
    """One team's corrected trials, their values and pre-correction violations."""

    tmc: np.ndarray
    tmofv: np.ndarray
    violations: np.ndarray
    evals_used: int


def recombine(tc, cbc_drone, method: str, cr: float, rng) -> np.ndarray:
    """Mix trial coordinates with the drone's current best.

    none: the trial passes through.  binomial: component j comes from the
    trial when u_j < cr or j is the forced index.  exponential: a contiguous
    circular block starting at a random index, block length geometric in cr.
    Both mixing methods keep at least one trial component.
    """
    tc = np.asarray(tc, dtype=float)
    if method == "none":
        return np.array(tc, copy=True)
    dim = tc.shape[0]
    if method == "binomial":
        jrand = int(rng.integers(dim))
        take = rng.random(dim) < cr
        take[jrand] = True
        return np.where(take, tc, cbc_drone)
    if method == "exponential":
        start = int(rng.integers(dim))
        length = 1
        while length < dim and rng.random() < cr:
            length += 1
        out = np.array(cbc_drone, dtype=float, copy=True)
        idx = (start + np.arange(length)) % dim
        out[idx] = tc[idx]
        return out
    raise ValueError(f"unknown recombination method {method!r}")


def violation(row, lb, ub) -> float:
    """Total out-of-bounds magnitude of a row: sum over components of the
    distance to the violated bound; zero in-bounds."""
    row = np.asarray(row, dtype=float)
    over = np.where(row > ub, row - ub, 0.0)
    under = np.where(row < lb, lb - row, 0.0)
    # cumulative sum keeps the addition order of a plain component loop
    return float(np.cumsum(over + under)[-1])


def correct_bounds(row, lb, ub, method: str, rng) -> np.ndarray:
    """Force a row back into [lb, ub].

    clamp: nearest bound.  reflect: mirror about the violated bound, clamped
    if still outside.  resample: violated components redrawn uniformly inside
    their interval, the rest untouched.
    """
    row = np.asarray(row, dtype=float)
    if method == "clamp":
        return np.minimum(np.maximum(row, lb), ub)
    if method == "reflect":
        out = np.where(row > ub, 2.0 * ub - row, row)
        out = np.where(row < lb, 2.0 * lb - row, out)
        return np.minimum(np.maximum(out, lb), ub)
    if method == "resample":
        out = np.array(row, copy=True)
        for j in np.flatnonzero((row < lb) | (row > ub)):
            out[j] = rng.uniform(lb[j], ub[j])
        return out
    raise ValueError(f"unknown correction method {method!r}")


def generate_trials(team: Team, state, problem, cfg, rng) -> TrialBatch:
    """One iteration's trials for a team.

    Consumes objective evaluations from the shared budget through
    ``state.evals_used``; when the budget runs out mid-team the remaining
    drones produce no trial (their slots stay at +inf on the current best).
    """
    n, dim = state.cbc.shape
    ctx = EvalContext(
        cbc=state.cbc, cbofv=state.cbofv, gbc=state.gbc, prev_tmc=team.prev_tmc,
        lb=problem.lb, ub=problem.ub, c1=cfg.c1, c2=cfg.c2, c3=cfg.c3,
        p_best_fraction=cfg.p_best_fraction, rng=rng,
    )
    tc = evaluate_team(team.firmware, ctx)

    tmc = np.array(state.cbc, copy=True)
    tmofv = np.full(n, np.inf)
    violations = np.zeros(n)
    scan_rows: list[np.ndarray] = []
    scan_idx: list[int] = []
    for d in range(n):
        if state.evals_used + len(scan_idx) >= cfg.budget:
            break
        row = tc[d]
        if not np.all(np.isfinite(row)):
            continue  # evaluation fault: worst-possible trial, no scan
        method = cfg.recombination_methods[rng.integers(len(cfg.recombination_methods))]
        cr = rng.uniform(cfg.cr_low, cfg.cr_high)
        trial = recombine(row, state.cbc[d], method, cr, rng)
        violations[d] = violation(trial, problem.lb, problem.ub)
        correction = cfg.correction_methods[rng.integers(len(cfg.correction_methods))]
        tmc[d] = correct_bounds(trial, problem.lb, problem.ub, correction, rng)
        scan_rows.append(tmc[d])
        scan_idx.append(d)
    if scan_idx:
        values = problem.eval_many(np.asarray(scan_rows))
        tmofv[scan_idx] = np.where(np.isnan(values), np.inf, values)
    state.evals_used += len(scan_idx)
    team.prev_tmc = np.array(tmc, copy=True)
    return TrialBatch(tmc=tmc, tmofv=tmofv, violations=violations, evals_used=len(scan_idx))
