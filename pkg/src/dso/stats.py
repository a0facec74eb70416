"""Descriptive run statistics and cross-method rank analysis.

``descriptive`` summarizes a set of final errors the way result tables
usually do (min/median/max/mean/sample std plus success rate).  For
comparing methods over a function suite, ``friedman`` computes the Friedman
rank-sum statistic over an averages matrix (methods x functions) and ``wtl``
counts wins/ties/losses per function against a control method.  Reported
averages are floored at 1e-9, the precision below which results count as
exact hits, so comparisons treat everything below the floor as a tie.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

ERROR_FLOOR = 1e-9


@dataclass(frozen=True)
class RunStats:
    minimum: float
    median: float
    maximum: float
    mean: float
    std: float
    success_rate: float


def descriptive(errors, threshold: float = ERROR_FLOOR) -> RunStats:
    """Order statistics, sample std and success rate of final run errors.

    The median of an even count is the midpoint of the two central values;
    success means error strictly below ``threshold``.
    """
    values = np.asarray(list(errors), dtype=float)
    if values.size == 0:
        raise ValueError("descriptive() needs at least one error value")
    return RunStats(
        minimum=float(values.min()),
        median=float(np.median(values)),
        maximum=float(values.max()),
        mean=float(values.mean()),
        std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
        success_rate=float(np.count_nonzero(values < threshold)) / values.size,
    )


def floor_error(value: float, floor: float = ERROR_FLOOR) -> float:
    """Reporting convention: averages below the success precision are
    published as the floor itself (1.000E-09)."""
    return max(float(value), floor)


@dataclass(frozen=True)
class ComparisonMatrix:
    """Average errors of ``methods`` (rows) on ``functions`` (columns)."""

    methods: tuple[str, ...]
    functions: tuple[str, ...]
    averages: np.ndarray

    def row(self, method: str) -> np.ndarray:
        try:
            return self.averages[self.methods.index(method)]
        except ValueError:
            raise KeyError(f"unknown method {method!r}") from None


def load_comparison_matrix(path, floor: float = ERROR_FLOOR) -> ComparisonMatrix:
    """Read a delimited fixture: first row function names, first column
    method names, entries in scientific notation.  Entries are floored."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValueError(f"comparison fixture {path!r} needs a header row and data rows")
    functions = tuple(cell.strip() for cell in rows[0][1:])
    methods = []
    data = []
    for r in rows[1:]:
        if len(r) != len(functions) + 1:
            raise ValueError(f"row {r[0]!r} has {len(r) - 1} entries, expected {len(functions)}")
        methods.append(r[0].strip())
        try:
            data.append([floor_error(float(cell), floor) for cell in r[1:]])
        except ValueError as exc:
            raise ValueError(f"row {r[0]!r}: {exc}") from None
    return ComparisonMatrix(tuple(methods), functions, np.array(data))


@dataclass(frozen=True)
class FriedmanResult:
    chi2: float
    df: int
    p_value: float
    chi2_uncorrected: float


def friedman(matrix) -> FriedmanResult:
    """Friedman rank-sum test over a methods x functions averages matrix.

    Methods are rank 1..k per function with ties averaged, and the usual
    statistic 12n/(k(k+1)) * [sum(Rbar_j^2) - k(k+1)^2/4] is divided by the
    tie-correction factor 1 - sum(t^3 - t)/(n k (k^2 - 1)).  The corrected
    value is the primary statistic (the uncorrected one is also returned);
    its p-value is the chi-square upper tail at k-1 degrees of freedom,
    computed through the regularized incomplete gamma function.  A fully
    tied matrix yields chi2 = 0, p = 1.
    """
    averages = matrix.averages if isinstance(matrix, ComparisonMatrix) else np.asarray(matrix, dtype=float)
    k, n = averages.shape
    if k < 2 or n < 2:
        raise ValueError("friedman() needs at least 2 methods and 2 functions")
    ranks = rankdata(averages, method="average", axis=0)
    rbar = ranks.mean(axis=1)
    plain = 12.0 * n / (k * (k + 1)) * (float(np.sum(rbar**2)) - k * (k + 1) ** 2 / 4.0)
    ties = 0.0
    for j in range(n):
        _, counts = np.unique(averages[:, j], return_counts=True)
        counts = counts.astype(float)
        ties += float(np.sum(counts**3 - counts))
    correction = 1.0 - ties / (n * k * (k * k - 1.0))
    df = k - 1
    if correction <= 0.0:
        return FriedmanResult(chi2=0.0, df=df, p_value=1.0, chi2_uncorrected=0.0)
    corrected = plain / correction
    return FriedmanResult(
        chi2=corrected,
        df=df,
        p_value=float(gammaincc(df / 2.0, corrected / 2.0)),
        chi2_uncorrected=plain,
    )


def wtl(control, other) -> tuple[int, int, int]:
    """Per-function wins/ties/losses of the control averages row."""
    control = np.asarray(control, dtype=float)
    other = np.asarray(other, dtype=float)
    if control.shape != other.shape:
        raise ValueError(f"length mismatch: {control.shape} vs {other.shape}")
    return (
        int(np.count_nonzero(control < other)),
        int(np.count_nonzero(control == other)),
        int(np.count_nonzero(control > other)),
    )


def wtl_against(matrix: ComparisonMatrix, control: str) -> list[tuple[str, tuple[int, int, int]]]:
    """W/T/L of ``control`` against every other method in the matrix."""
    control_row = matrix.row(control)
    return [
        (name, wtl(control_row, matrix.averages[i]))
        for i, name in enumerate(matrix.methods)
        if name != control
    ]
