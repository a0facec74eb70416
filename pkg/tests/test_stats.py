import numpy as np
import pytest
from scipy import stats as spstats

from dso import (
    ComparisonMatrix,
    descriptive,
    floor_error,
    friedman,
    load_comparison_matrix,
    wtl,
    wtl_against,
)
from dso.cli import packaged_fixture_path

#: W/T/L of DSO against each method, from the published comparison.
PUBLISHED_WTL = {
    "BLX-GL50": (3, 3, 4),
    "BLX-MA": (6, 2, 2),
    "CoEVO": (5, 3, 2),
    "DE": (3, 3, 4),
    "DMS-L-PSO": (1, 2, 7),
    "EDA": (3, 3, 4),
    "G-CMA-ES": (0, 3, 7),
    "K-PCX": (4, 2, 4),
    "L-CMA-ES": (3, 2, 5),
    "L-SaDE": (2, 2, 6),
    "SPC-PNX": (5, 3, 2),
}


@pytest.fixture(scope="module")
def fixture_matrix():
    with packaged_fixture_path() as path:
        return load_comparison_matrix(path)


# --------------------------------------------------------------------------
# descriptive statistics

def test_descriptive_success_rate():
    stats = descriptive([0.0, 0.0, 2e-9], threshold=1e-9)
    assert stats.success_rate == pytest.approx(2 / 3)


def test_descriptive_order_statistics():
    stats = descriptive([1.0, 2.0, 3.0])
    assert stats.mean == 2.0
    assert stats.median == 2.0
    assert stats.minimum == 1.0 and stats.maximum == 3.0


def test_descriptive_even_count_median_is_midpoint():
    assert descriptive([1.0, 2.0, 3.0, 10.0]).median == 2.5


def test_descriptive_sample_std():
    stats = descriptive([1.0, 2.0, 3.0])
    assert stats.std == pytest.approx(1.0)
    assert descriptive([5.0]).std == 0.0


def test_descriptive_rejects_empty_input():
    with pytest.raises(ValueError):
        descriptive([])


def test_floor_error_reporting_convention():
    assert floor_error(4.08e-19) == 1e-9
    assert f"{floor_error(4.08e-19):.3E}" == "1.000E-09"
    assert floor_error(0.5) == 0.5


# --------------------------------------------------------------------------
# fixture loading

def test_fixture_shape_and_flooring(fixture_matrix):
    assert len(fixture_matrix.methods) == 12
    assert len(fixture_matrix.functions) == 10
    assert fixture_matrix.methods[0] == "DSO"
    assert np.all(fixture_matrix.averages >= 1e-9)


def test_load_rejects_malformed_fixture(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("method,f1\nA,1.0,2.0\n")
    with pytest.raises(ValueError):
        load_comparison_matrix(bad)
    bad.write_text("method,f1\nA,not-a-number\n")
    with pytest.raises(ValueError):
        load_comparison_matrix(bad)


# --------------------------------------------------------------------------
# Friedman test

def test_friedman_reproduces_published_statistic(fixture_matrix):
    result = friedman(fixture_matrix)
    assert result.df == 11
    assert result.chi2 == pytest.approx(20.6765, abs=1e-3)
    assert result.p_value == pytest.approx(3.688e-2, abs=1e-4)


def test_friedman_matches_scipy_on_fixture(fixture_matrix):
    expected = spstats.friedmanchisquare(*[row for row in fixture_matrix.averages])
    result = friedman(fixture_matrix)
    assert result.chi2 == pytest.approx(expected.statistic, rel=1e-12)
    assert result.p_value == pytest.approx(expected.pvalue, rel=1e-9)


def test_friedman_matches_scipy_on_random_matrices():
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = int(rng.integers(3, 8))
        n = int(rng.integers(2, 9))
        m = rng.integers(0, 5, size=(k, n)).astype(float)  # plenty of ties
        if np.all(m == m[0, 0]):
            continue
        expected = spstats.friedmanchisquare(*[row for row in m])
        result = friedman(m)
        assert result.chi2 == pytest.approx(expected.statistic, rel=1e-12)


def test_friedman_hand_matrix_against_rank_sum_oracle():
    # tie-free matrix: corrected and plain statistics coincide
    m = np.array([
        [1.0, 5.0, 9.0, 2.0],
        [2.0, 6.0, 7.0, 1.0],
        [3.0, 4.0, 8.0, 3.5],
    ])
    k, n = m.shape
    # brute-force ranks per column by explicit sorting
    rank_sums = np.zeros(k)
    for j in range(n):
        order = sorted(range(k), key=lambda i: m[i, j])
        for pos, i in enumerate(order, start=1):
            rank_sums[i] += pos
    chi2 = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums**2) - 3.0 * n * (k + 1)
    result = friedman(m)
    assert result.chi2_uncorrected == pytest.approx(chi2, rel=1e-12)
    assert result.chi2 == pytest.approx(chi2, rel=1e-12)


def test_friedman_degenerate_matrix():
    result = friedman(np.ones((4, 5)))
    assert result.chi2 == 0.0
    assert result.p_value == 1.0


def test_friedman_requires_two_methods_and_functions():
    with pytest.raises(ValueError):
        friedman(np.ones((1, 5)))
    with pytest.raises(ValueError):
        friedman(np.ones((3, 1)))


def test_friedman_permutation_equivariance(fixture_matrix):
    base = friedman(fixture_matrix).chi2
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(fixture_matrix.methods))
    assert friedman(fixture_matrix.averages[perm]).chi2 == pytest.approx(base, rel=1e-12)


def test_friedman_invariant_under_monotone_column_maps(fixture_matrix):
    base = friedman(fixture_matrix).chi2
    transformed = np.log(fixture_matrix.averages)
    assert friedman(transformed).chi2 == pytest.approx(base, rel=1e-12)


def test_friedman_p_value_agrees_with_chi2_sf():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = rng.uniform(size=(5, 6))
        result = friedman(m)
        assert 0.0 < result.p_value <= 1.0
        assert result.p_value == pytest.approx(spstats.chi2.sf(result.chi2, result.df),
                                               rel=1e-9)


# --------------------------------------------------------------------------
# wins / ties / losses

def test_wtl_published_spot_checks(fixture_matrix):
    dso_row = fixture_matrix.row("DSO")
    assert wtl(dso_row, fixture_matrix.row("G-CMA-ES")) == (0, 3, 7)
    assert wtl(dso_row, fixture_matrix.row("BLX-MA")) == (6, 2, 2)


def test_wtl_full_published_table(fixture_matrix):
    assert dict(wtl_against(fixture_matrix, "DSO")) == PUBLISHED_WTL


def test_wtl_self_is_all_ties(fixture_matrix):
    row = fixture_matrix.row("DSO")
    assert wtl(row, row) == (0, len(row), 0)


def test_wtl_counts_sum_to_function_count():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 15))
        a, b = rng.integers(0, 3, size=(2, n)).astype(float)
        w, t, l = wtl(a, b)
        assert w + t + l == n


def test_wtl_length_mismatch():
    with pytest.raises(ValueError):
        wtl(np.ones(3), np.ones(4))


def test_comparison_matrix_unknown_method(fixture_matrix):
    with pytest.raises(KeyError):
        fixture_matrix.row("nope")
