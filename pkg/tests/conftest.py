import numpy as np
import pytest

from dso import DsoConfig, EvalContext

#: one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_REPORT: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)


def make_ctx(cbc, cbofv=None, gbc=None, prev_tmc=None, lb=None, ub=None,
             seed=0, drone=0, **kwargs):
    """EvalContext with sensible defaults for small hand-built states."""
    cbc = np.asarray(cbc, dtype=float)
    n, dim = cbc.shape
    return EvalContext(
        cbc=cbc,
        cbofv=np.arange(1.0, n + 1.0) if cbofv is None else np.asarray(cbofv, dtype=float),
        gbc=cbc[0].copy() if gbc is None else np.asarray(gbc, dtype=float),
        prev_tmc=np.zeros((n, dim)) if prev_tmc is None else np.asarray(prev_tmc, dtype=float),
        lb=np.full(dim, -100.0) if lb is None else np.asarray(lb, dtype=float),
        ub=np.full(dim, 100.0) if ub is None else np.asarray(ub, dtype=float),
        c1=kwargs.pop("c1", 0.5),
        c2=kwargs.pop("c2", 0.4),
        c3=kwargs.pop("c3", 0.9),
        p_best_fraction=kwargs.pop("p_best_fraction", 0.25),
        rng=kwargs.pop("rng", np.random.default_rng(seed)),
        drone=drone,
        **kwargs,
    )


@pytest.fixture
def small_cfg():
    """A cheap configuration for loop-level tests."""
    return DsoConfig(teams=2, drones=5, budget=2000, max_iterations=200)
