"""Drone Squadron Optimization.

A population-based global optimizer in which each team of drones moves by an
executable perturbation scheme (its firmware, a departure+offset expression
tree) and a command center ranks the teams and rewrites the worst firmware
online by random subtree mutation.  Includes a shifted benchmark suite, a
rank-statistics toolkit and a CLI harness.
"""

from .backend import compiled_available, kernel_name
from .benchmarks import (
    SUCCESS_THRESHOLD,
    SUITE_FUNCTIONS,
    Problem,
    make_problem,
    read_shift,
    write_shift,
)
from .command_center import (
    ConfigError,
    DsoConfig,
    FirmwareChange,
    RunRecord,
    SquadronState,
    TraceRow,
    initialize,
    rank_teams,
    run,
    select_and_update,
    team_quality,
    update_firmware,
)
from .firmware import (
    EvalContext,
    Firmware,
    FirmwareError,
    Node,
    PatternError,
    SexprSyntaxError,
    UnknownSymbolError,
    effective_mass,
    evaluate,
    evaluate_team,
    mutate_variant,
    parse_expr,
    parse_firmware,
    protected_div,
    reference_firmware,
    serialize,
    tree_size,
    validate,
)
from .squadron import (
    Team,
    TrialBatch,
    correct_bounds,
    generate_trials,
    mvns_sample,
    opposition,
    recombine,
    step_offset,
    violation,
)
from .stats import (
    ComparisonMatrix,
    FriedmanResult,
    RunStats,
    descriptive,
    floor_error,
    friedman,
    load_comparison_matrix,
    wtl,
    wtl_against,
)

__version__ = "0.1.0"
