"""The supervisory loop: selection, ranking, stagnation control, firmware upgrades.

The command center owns the squadron state.  Every iteration each team
generates one batch of trials; the best trial per drone index then competes
with that index's current best (hard selection).  Indices that have not
improved for ``max_stagnation`` iterations switch to soft selection and
accept a worse trial with probability ``p_acc`` -- except the index holding
the global best, which is never degraded.  Teams are scored by mean rank
plus normalized boundary violations, and the worst replaceable firmware is
swapped for a mutated variant of the best one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .firmware import mutate_variant, reference_firmware, serialize
from .squadron import Team, TrialBatch, generate_trials


class ConfigError(ValueError):
    pass


@dataclass
class DsoConfig:
    """Run and evolution parameters; the defaults are the standard setup."""

    teams: int = 4
    drones: int = 25
    c1: float = 0.5
    c2: float = 0.4
    c3: float = 0.9
    w: int = 1                      # firmware replaced per update
    max_stagnation: int = 50
    p_acc: float = 0.1
    s_min: int = 5
    s_max: int = 20
    p_best_fraction: float = 0.25
    cr_low: float = 0.4
    cr_high: float = 0.9
    update_period: int = 1
    budget: int = 100_000
    max_iterations: int = 100_000
    success_threshold: float = 1e-9
    recombination_methods: tuple[str, ...] = ("none", "binomial", "exponential")
    correction_methods: tuple[str, ...] = ("clamp", "reflect", "resample")

    def validate(self) -> None:
        if self.teams < 2:
            raise ConfigError("need at least 2 teams")
        if self.drones < 4:
            raise ConfigError("need at least 4 drones per team")
        if not 0.0 < self.p_acc < 1.0:
            raise ConfigError("p_acc must be in (0, 1)")
        if not 0 <= self.w < self.teams:
            raise ConfigError("w must satisfy 0 <= w < teams")
        if self.s_min < 3 or self.s_max <= self.s_min:
            raise ConfigError("tree size bounds must satisfy 3 <= s_min < s_max")
        if not 0.0 <= self.cr_low <= self.cr_high <= 1.0:
            raise ConfigError("CR range must satisfy 0 <= low <= high <= 1")
        if not 0.0 < self.p_best_fraction <= 1.0:
            raise ConfigError("p_best_fraction must be in (0, 1]")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if self.update_period < 1:
            raise ConfigError("update_period must be at least 1")
        if not self.recombination_methods or not self.correction_methods:
            raise ConfigError("method sets must not be empty")


@dataclass
class SquadronState:
    cbc: np.ndarray
    cbofv: np.ndarray
    gbc: np.ndarray
    gbofv: float
    stagnation: np.ndarray
    iteration: int = 0
    evals_used: int = 0


@dataclass
class TraceRow:
    iteration: int
    evals: int
    gbofv: float
    team_qualities: tuple[float, ...]
    firmware_changed: bool


@dataclass
class FirmwareChange:
    iteration: int
    team_id: int
    old_text: str
    new_text: str


@dataclass
class RunRecord:
    seed: int
    function: str
    dim: int
    evals_used: int
    iterations: int
    best_error: float
    best_value: float
    best_coords: np.ndarray
    trace: list[TraceRow] = field(default_factory=list)
    firmware_log: list[FirmwareChange] = field(default_factory=list)


def initialize(problem, cfg: DsoConfig, rng) -> SquadronState:
    """Scan teams*drones uniform points and keep the best ``drones`` of them."""
    scans = cfg.teams * cfg.drones
    if cfg.budget < scans:
        raise ConfigError(f"budget {cfg.budget} cannot cover the {scans} initial scans")
    coords = rng.uniform(problem.lb, problem.ub, size=(scans, problem.dim))
    values = problem.eval_many(coords)
    values = np.where(np.isnan(values), np.inf, values)
    keep = np.argsort(values, kind="stable")[: cfg.drones]
    cbofv = values[keep].copy()
    cbc = coords[keep].copy()
    return SquadronState(
        cbc=cbc, cbofv=cbofv, gbc=cbc[0].copy(), gbofv=float(cbofv[0]),
        stagnation=np.zeros(cfg.drones, dtype=int), iteration=0, evals_used=scans,
    )


def select_and_update(state: SquadronState, batches: list[TrialBatch],
                      cfg: DsoConfig, rng) -> int:
    """Per-index competition between the teams' trials and the current bests.

    Returns the number of global-best improvements.  Stagnation counters
    reset exactly on strict per-index improvement and grow otherwise; a
    stagnated, non-elite index may soft-accept a worse finite trial with
    probability ``p_acc``.
    """
    tmofv = np.column_stack([b.tmofv for b in batches])
    improved = 0
    elite = int(np.argmin(state.cbofv))
    for d in range(len(state.cbofv)):
        best_team = int(np.argmin(tmofv[d]))
        best_val = float(tmofv[d, best_team])
        if best_val < state.cbofv[d]:
            state.cbofv[d] = best_val
            state.cbc[d] = batches[best_team].tmc[d]
            if best_val < state.gbofv:
                improved += 1
                state.gbofv = best_val
                state.gbc = batches[best_team].tmc[d].copy()
            state.stagnation[d] = 0
        else:
            if (state.stagnation[d] >= cfg.max_stagnation and d != elite
                    and np.isfinite(best_val) and rng.random() < cfg.p_acc):
                state.cbofv[d] = best_val
                state.cbc[d] = batches[best_team].tmc[d]
            state.stagnation[d] += 1
    return improved


def rank_teams(tmofv: np.ndarray) -> np.ndarray:
    """Rank teams 1..t per drone row, ties averaged."""
    return rankdata(tmofv, method="average", axis=1)


def team_quality(ranks: np.ndarray, violation_sums: np.ndarray) -> np.ndarray:
    """Mean rank per team plus its violation share (lower is better).

    Raw violation sums can dwarf ranks, so they are scaled by the worst
    team's sum into [0, 1] before being added.
    """
    scores = ranks.mean(axis=0)
    vmax = float(np.max(violation_sums))
    if vmax > 0.0:
        scores = scores + np.asarray(violation_sums, dtype=float) / vmax
    return scores


def update_firmware(teams: list[Team], qualities: np.ndarray, cfg: DsoConfig,
                    rng, iteration: int = 0) -> list[FirmwareChange]:
    """Replace the w worst replaceable firmware with variants of the w best.

    Fixed firmware is never touched; when the worst team holds one, the next
    worst replaceable team is chosen instead.  Returns the applied changes
    (empty when no team is replaceable).
    """
    order = np.argsort(qualities, kind="stable")
    worst_first = [int(i) for i in order[::-1]]
    changes: list[FirmwareChange] = []
    replaced: set[int] = set()
    for k in range(cfg.w):
        donor = teams[int(order[k])]
        target = next(
            (teams[i] for i in worst_first
             if not teams[i].firmware.fixed and teams[i].team_id not in replaced),
            None,
        )
        if target is None:
            break
        old_text = serialize(target.firmware)
        variant = mutate_variant(donor.firmware, rng, s_min=cfg.s_min, s_max=cfg.s_max)
        target.install(variant)
        replaced.add(target.team_id)
        changes.append(FirmwareChange(iteration, target.team_id, old_text, serialize(variant)))
    return changes


def run(problem, cfg: DsoConfig, seed: int) -> RunRecord:
    """One full optimization run.

    Stops when the evaluation budget is exhausted, ``max_iterations`` is
    reached, or the error drops below ``success_threshold``.  Fully
    deterministic given (problem, cfg, seed).
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    state = initialize(problem, cfg, rng)
    refs = reference_firmware()
    teams = [
        Team.fresh(i, refs[i % len(refs)], cfg.drones, problem.dim)
        for i in range(cfg.teams)
    ]
    trace = [TraceRow(0, state.evals_used, state.gbofv, (), False)]
    firmware_log: list[FirmwareChange] = []
    while (state.evals_used < cfg.budget
           and state.iteration < cfg.max_iterations
           and state.gbofv - problem.bias >= cfg.success_threshold):
        state.iteration += 1
        batches = [generate_trials(team, state, problem, cfg, rng) for team in teams]
        select_and_update(state, batches, cfg, rng)
        tmofv = np.column_stack([b.tmofv for b in batches])
        ranks = rank_teams(tmofv)
        mean_ranks = ranks.mean(axis=0)
        violation_sums = np.array([float(b.violations.sum()) for b in batches])
        qualities = team_quality(ranks, violation_sums)
        for i, team in enumerate(teams):
            team.rank_history.append(float(mean_ranks[i]))
            team.violation_history.append(float(violation_sums[i]))
        changes: list[FirmwareChange] = []
        if state.iteration % cfg.update_period == 0:
            changes = update_firmware(teams, qualities, cfg, rng, iteration=state.iteration)
            firmware_log.extend(changes)
        trace.append(TraceRow(state.iteration, state.evals_used, state.gbofv,
                              tuple(float(q) for q in qualities), bool(changes)))
    return RunRecord(
        seed=seed,
        function=problem.name,
        dim=problem.dim,
        evals_used=state.evals_used,
        iterations=state.iteration,
        best_error=state.gbofv - problem.bias,
        best_value=state.gbofv,
        best_coords=state.gbc.copy(),
        trace=trace,
        firmware_log=firmware_log,
    )
