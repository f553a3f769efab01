import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mdclass.exceptions import ClassTooSmall, NoFeaturesSelected
from mdclass.numerics import student_t_two_sided_p
from mdclass.selection import TTestSelector, project_features, t_test_select
from oracles import t_two_sided_p_quadrature


def two_groups(pos, neg):
    X = np.array(list(pos) + list(neg), dtype=float)[:, None]
    y = np.array([1] * len(pos) + [0] * len(neg))
    return X, y


def test_identical_groups():
    r = t_test_select(*two_groups([1, 2, 3], [1, 2, 3]))
    assert r.t_stat[0] == 0 and r.p_value[0] == 1 and not r.selected[0]


def test_constant_separated_groups():
    r = t_test_select(*two_groups([0, 0, 0], [1, 1, 1]))
    assert r.p_value[0] == 0 and r.selected[0]


def test_constant_equal_groups():
    r = t_test_select(*two_groups([2, 2, 2], [2, 2]))
    assert r.t_stat[0] == 0 and r.p_value[0] == 1


def test_pooled_worked_example():
    r = t_test_select(*two_groups([1, 2, 3], [3, 4, 5]), alpha=0.05)
    assert r.t_stat[0] == pytest.approx(-2.449, abs=1e-3)
    assert r.t_stat[0] == pytest.approx(-math.sqrt(6), rel=1e-12)
    assert r.df[0] == 4
    # frozen from quadrature of the t(4) density
    assert r.p_value[0] == pytest.approx(0.07048399691022, abs=1e-6)
    assert not r.selected[0]


def test_welch_matches_hand_computation():
    pos, neg = [1.0, 2.0, 4.0, 7.0], [3.0, 3.5, 4.0]
    r = t_test_select(*two_groups(pos, neg), variant="welch")
    v1, v0 = np.var(pos, ddof=1), np.var(neg, ddof=1)
    se2 = v1 / 4 + v0 / 3
    df = se2**2 / ((v1 / 4) ** 2 / 3 + (v0 / 3) ** 2 / 2)
    t = (np.mean(pos) - np.mean(neg)) / math.sqrt(se2)
    assert r.t_stat[0] == pytest.approx(t, rel=1e-12)
    assert r.df[0] == pytest.approx(df, rel=1e-12)
    assert r.p_value[0] == pytest.approx(t_two_sided_p_quadrature(t, df), abs=1e-6)


def test_welch_equals_pooled_for_balanced_equal_variance():
    X, y = two_groups([1, 2, 3], [3, 4, 5])
    pooled, welch = t_test_select(X, y), t_test_select(X, y, variant="welch")
    assert welch.t_stat[0] == pytest.approx(pooled.t_stat[0], rel=1e-12)


def test_class_too_small():
    with pytest.raises(ClassTooSmall):
        t_test_select(*two_groups([1], [2, 3, 4]))


def test_report_consistency():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 6))
    y = np.arange(30) % 2
    X[y == 1, :2] += 1.5
    r = t_test_select(X, y, alpha=0.05)
    for j in range(6):
        assert r.p_value[j] == student_t_two_sided_p(r.t_stat[j], r.df[j])
        assert r.selected[j] == (r.p_value[j] < 0.05)


def test_project_all_selected():
    X, y = np.c_[np.r_[0, 0, 1, 1.0], np.r_[0, 0.1, 1, 1.1]], np.array([0, 0, 1, 1])
    r = t_test_select(X + [[0, 0], [0.01, 0], [0, 0], [0.02, 0]], y, alpha=0.5)
    assert r.selected.all()
    out, _ = project_features(X, r)
    np.testing.assert_array_equal(out, X)


def test_project_keeps_order():
    rng = np.random.default_rng(1)
    y = np.arange(40) % 2
    X = rng.normal(size=(40, 4))
    X[:, 1] += 3 * y
    X[:, 3] += 3 * y
    r = t_test_select(X, y, alpha=1e-4)
    assert r.selected.tolist() == [False, True, False, True]
    out, _ = project_features(X, r)
    np.testing.assert_array_equal(out, X[:, [1, 3]])


def test_project_none_selected():
    X, y = two_groups([1, 2, 3], [1, 2, 3])
    r = t_test_select(X, y)
    with pytest.raises(NoFeaturesSelected):
        project_features(X, r)
    out, flagged = project_features(X, r, keep_all_on_empty=True)
    np.testing.assert_array_equal(out, X)
    assert flagged.kept_all_on_empty


def test_selector_estimator():
    rng = np.random.default_rng(2)
    y = np.arange(30) % 2
    X = rng.normal(size=(30, 3))
    X[:, 2] += 4 * y
    sel = TTestSelector().fit(X, y)
    assert sel.get_support().tolist() == [False, False, True]
    np.testing.assert_array_equal(sel.transform(X), X[:, [2]])
    with pytest.raises(NoFeaturesSelected):
        TTestSelector(alpha=1e-300).fit(rng.normal(size=(30, 2)), y)
    kept = TTestSelector(alpha=1e-300, keep_all_on_empty=True).fit(rng.normal(size=(30, 2)), y)
    assert kept.transform(np.ones((2, 2))).shape == (2, 2)


samples = arrays(np.float64, (12, 3), elements=st.floats(-100, 100, allow_nan=False, width=32))


@given(X=samples, variant=st.sampled_from(["pooled", "welch"]))
@settings(max_examples=80, deadline=None)
def test_label_swap_antisymmetry(X, variant):
    y = np.r_[np.ones(5, int), np.zeros(7, int)]
    a, b = t_test_select(X, y, variant=variant), t_test_select(X, 1 - y, variant=variant)
    np.testing.assert_allclose(a.t_stat, -b.t_stat, rtol=1e-9)
    np.testing.assert_allclose(a.p_value, b.p_value, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(a.selected, b.selected)


@given(
    X=samples,
    scale=st.floats(0.01, 100).flatmap(lambda s: st.sampled_from([s, -s])),
    shift=st.floats(-50, 50),
)
@settings(max_examples=80, deadline=None)
def test_affine_invariance(X, scale, shift):
    y = np.r_[np.ones(6, int), np.zeros(6, int)]
    sd = [min(X[y == c, j].std() for c in (0, 1)) for j in range(3)]
    # well-conditioned features only; near-constant ones are dominated by rounding
    assume(min(sd) > 1e-3)
    a = t_test_select(X, y)
    b = t_test_select(scale * X + shift, y)
    np.testing.assert_allclose(np.abs(a.t_stat), np.abs(b.t_stat), rtol=1e-9)
    np.testing.assert_allclose(a.p_value, b.p_value, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(a.selected, b.selected)


@given(X=samples, a1=st.floats(0.001, 1), a2=st.floats(0.001, 1))
@settings(max_examples=60, deadline=None)
def test_alpha_monotonicity(X, a1, a2):
    lo, hi = sorted((a1, a2))
    y = np.r_[np.ones(6, int), np.zeros(6, int)]
    small, large = t_test_select(X, y, alpha=lo), t_test_select(X, y, alpha=hi)
    assert np.all(~small.selected | large.selected)


def test_report_csv():
    X, y = two_groups([1, 2, 3], [3, 4, 5])
    text = t_test_select(X, y, feature_names=("q",)).to_csv()
    header, row = text.strip().splitlines()
    assert header == "feature_name,t_stat,df,p_value,selected"
    assert row.startswith("q,") and row.endswith(",false")
