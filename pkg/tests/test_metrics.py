import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import special, stats

from ggbm.metrics import (MetricError, betainc, pr_auc, roc_auc, roc_curve, student_t_sf2, welch_t_test,
                          write_metrics_json)
from tests.oracles import auc_pairs, average_precision_steps


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_errors():
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        roc_auc([0.1, np.nan], [0, 1])
    with pytest.raises(MetricError):
        pr_auc([0.1, 0.2], [0, 0])


fixture = st.integers(2, 20).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 6).map(lambda k: k / 4), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@given(fixture)
def test_auc_matches_pairwise_oracle(f):
    s, y = f
    assume(0 < sum(y) < len(y))
    assert abs(roc_auc(s, y) - auc_pairs(s, y)) <= 1e-12
    assert abs(roc_curve(s, y).auc - roc_auc(s, y)) <= 1e-12


@given(fixture)
def test_ap_matches_stepwise_oracle(f):
    s, y = f
    assume(sum(y) > 0)
    assert abs(pr_auc(s, y) - average_precision_steps(s, y)) <= 1e-12


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=30, unique=True), st.integers(0, 2**32 - 1))
def test_auc_rank_invariance_and_complement(s, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(s))
    assume(0 < y.sum() < len(y))
    s = np.array(s, dtype=float)
    a = roc_auc(s, y)
    assert roc_auc(s ** 3 + 7 * s, y) == pytest.approx(a, abs=1e-12)
    assert a + roc_auc(-s, y) == pytest.approx(1.0, abs=1e-12)


def test_pr_auc_examples():
    assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert pr_auc([0.9, 0.2, 0.1], [1, 0, 0]) == 1.0
    rng = np.random.default_rng(0)
    y = (rng.random(200_000) < 0.1).astype(int)
    assert pr_auc(rng.random(200_000), y) == pytest.approx(0.1, abs=0.01)


def test_roc_curve_shape():
    c = roc_curve([0.9, 0.1], [1, 0])
    assert list(zip(c.fpr, c.tpr)) == [(0, 0), (0, 1), (1, 1)]
    assert roc_curve([0.1, 0.9], [1, 0]).auc == 0.0
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 60))
        s = rng.integers(0, 10, n) / 3
        y = rng.integers(0, 2, n)
        if 0 < y.sum() < n:
            c = roc_curve(s, y)
            assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
            assert (c.fpr[0], c.tpr[0], c.fpr[-1], c.tpr[-1]) == (0, 0, 1, 1)
            assert abs(c.auc - roc_auc(s, y)) <= 1e-12


def test_tpr_at():
    c = roc_curve([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    assert c.tpr_at([0.0, 0.5, 1.0]).tolist() == [0.5, 1.0, 1.0]


def test_write_outputs(tmp_path):
    out = write_metrics_json([0.2, 0.9, 0.4], [0, 1, 0], tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text()) == out == {"roc_auc": 1.0, "pr_auc": 1.0,
                                                                    "n_pos": 1, "n_neg": 2}
    roc_curve([0.2, 0.9, 0.4], [0, 1, 0]).write_csv(tmp_path / "roc.csv")
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "fpr,tpr"


def test_welch_hand_example():
    t, p = welch_t_test([1, 2, 3], [4, 5, 6])
    assert t == pytest.approx(-3.674, abs=1e-3)
    assert p == pytest.approx(0.0214, abs=1e-3)


def test_welch_identical_and_antisymmetric():
    t, p = welch_t_test([0.7, 0.8, 0.9], [0.7, 0.8, 0.9])
    assert (t, p) == (0.0, 1.0)
    t1, p1 = welch_t_test([1, 2, 3.5], [2, 4, 9])
    t2, p2 = welch_t_test([2, 4, 9], [1, 2, 3.5])
    assert t1 == -t2 and p1 == p2


def test_welch_errors():
    with pytest.raises(MetricError):
        welch_t_test([1.0], [1.0, 2.0])
    with pytest.raises(MetricError):
        welch_t_test([1.0, 1.0], [2.0, 2.0])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=25), st.lists(st.floats(-10, 10), min_size=2, max_size=25))
def test_welch_matches_scipy(a, b):
    assume(np.var(a) > 1e-3 and np.var(b) > 1e-3)
    t, p = welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-10)


@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-10)


def test_t_tail():
    assert student_t_sf2(0.0, 5) == pytest.approx(1.0)
    assert student_t_sf2(2.0, 1e6) == pytest.approx(2 * stats.norm.sf(2.0), abs=1e-6)
