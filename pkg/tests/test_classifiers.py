import json
import math

import numpy as np
import pytest
from sklearn.base import clone

from mdclass.classifiers import (
    SVC,
    GaussianNB,
    LinearDiscriminantAnalysis,
    LogisticRegression,
    _kernel,
    logistic_objective,
    model_to_json,
    predict_label,
    predict_score,
)
from mdclass.exceptions import DimensionMismatch, SingleClass
from oracles import central_gradient, svm_dual_optimum

ALL = [LogisticRegression(), GaussianNB(), LinearDiscriminantAnalysis(), SVC()]


def blobs(seed, n=60, d=3, sep=1.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, d)) + np.where(y[:, None] == 1, sep, -sep)
    return X, y


def kkt_violation(model, X, y):
    """Largest violation of the soft-margin optimality conditions."""
    sign = np.where(y == 1, 1.0, -1.0)
    margin = sign * model.decision_function(X) - 1.0
    alpha, C = model.alpha_, model.C
    worst = 0.0
    for a, m in zip(alpha, margin):
        if a <= 0:
            worst = max(worst, -m)
        elif a >= C:
            worst = max(worst, m)
        else:
            worst = max(worst, abs(m))
    return worst


# logistic regression


def test_logistic_symmetric_data():
    x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])[:, None]
    y = (x[:, 0] > 0).astype(int)
    model = LogisticRegression().fit(x, y)
    assert abs(model.intercept_) <= 1e-6
    assert model.coef_[0] > 0
    assert model.predict_proba([[0.0]])[0, 1] == pytest.approx(0.5, abs=1e-6)


def test_logistic_converged_gradient():
    X, y = blobs(0, sep=0.5)
    model = LogisticRegression().fit(X, y)
    assert model.converged_
    _, grad = logistic_objective(model.coef_, model.intercept_, X, y, model.l2)
    assert np.abs(grad).max() <= 1e-8


def test_logistic_gradient_matches_finite_differences():
    X, y = blobs(1, n=40, d=4, sep=0.4)
    rng = np.random.default_rng(5)
    for _ in range(20):
        beta = rng.normal(size=5)

        def f(b):
            return logistic_objective(b[:-1], b[-1], X, y, 1e-4)[0]

        grad = logistic_objective(beta[:-1], beta[-1], X, y, 1e-4)[1]
        fd = central_gradient(f, beta, h=1e-5)
        assert np.abs(grad - fd).max() <= 1e-6 * max(1.0, np.abs(grad).max())


def test_logistic_objective_non_increasing():
    X, y = blobs(2, sep=0.3)
    model = LogisticRegression().fit(X, y)
    hist = np.array(model.loss_history_)
    assert np.all(np.diff(hist) <= 0)


def test_logistic_null_model_scores_zero():
    model = LogisticRegression.from_parameters([0.0, 0.0], 0.0)
    np.testing.assert_array_equal(predict_score(model, np.ones((3, 2))), 0.0)
    np.testing.assert_array_equal(predict_label(model, np.ones((3, 2))), 1)


def test_logistic_score_increases_along_weights():
    X, y = blobs(3)
    model = LogisticRegression().fit(X, y)
    steps = np.linspace(-2, 2, 9)[:, None] * model.coef_
    assert np.all(np.diff(model.decision_function(steps)) > 0)


# naive Bayes


def test_nb_point_masses():
    X = np.array([[0.0, 0.0]] * 3 + [[5.0, 5.0]] * 3)
    y = np.array([0, 0, 0, 1, 1, 1])
    assert GaussianNB().fit(X, y).score(X, y) == 1.0


def test_nb_hand_case():
    # class 0: mean 0, var 1; class 1: mean 2, var 1; equal priors
    X = np.array([[-1.0], [1.0], [1.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    model = GaussianNB().fit(X, y)
    np.testing.assert_allclose(model.theta_.ravel(), [0.0, 2.0])
    assert model.decision_function([[1.0]])[0] == pytest.approx(0.0, abs=1e-12)
    expected = -0.5 * ((3 - 2) ** 2 - 3**2) / model.var_[0, 0]
    assert model.decision_function([[3.0]])[0] == pytest.approx(expected, rel=1e-9)


def test_nb_variance_floor():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    model = GaussianNB().fit(X, [0, 0, 1, 1])
    assert np.all(model.var_ >= model.epsilon_)
    assert np.isfinite(model.decision_function(X)).all()


# LDA


def test_lda_boundary_equal_priors():
    model = LinearDiscriminantAnalysis.from_parameters(
        [[0.0, 0.0], [2.0, 0.0]], np.eye(2), [0.5, 0.5]
    )
    pts = np.c_[np.ones(7), np.linspace(-3, 3, 7)]
    np.testing.assert_allclose(model.decision_function(pts), 0.0, atol=1e-9)
    assert model.decision_function([[2.0, 0.0]])[0] > 0


def test_lda_boundary_unequal_priors():
    priors = np.array([0.25, 0.75])
    model = LinearDiscriminantAnalysis.from_parameters(
        [[0.0, 0.0], [2.0, 0.0]], np.eye(2), priors
    )
    # solving delta_1 = delta_0: 2 x1 - 2 + log(p1/p0) = 0
    boundary = 1.0 - math.log(priors[1] / priors[0]) / 2.0
    assert model.decision_function([[boundary, 0.7]])[0] == pytest.approx(0.0, abs=1e-9)
    assert boundary < 1.0  # moved toward class 0


def test_lda_fitted_symmetric_design():
    base = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    X = np.r_[base, base + [2.0, 0.0]]
    y = np.r_[np.zeros(4, int), np.ones(4, int)]
    model = LinearDiscriminantAnalysis().fit(X, y)
    np.testing.assert_allclose(model.covariance_, (4 / 6 + 1e-6) * np.eye(2), rtol=1e-12)
    assert model.decision_function([[1.0, 5.0]])[0] == pytest.approx(0.0, abs=1e-9)


def test_lda_identity_is_nearest_mean():
    rng = np.random.default_rng(9)
    means = rng.normal(size=(2, 3))
    model = LinearDiscriminantAnalysis.from_parameters(means, np.eye(3), [0.5, 0.5])
    pts = rng.normal(size=(100, 3)) * 2
    nearest = (np.linalg.norm(pts - means[1], axis=1) <= np.linalg.norm(pts - means[0], axis=1)).astype(int)
    np.testing.assert_array_equal(model.predict(pts), nearest)


@pytest.mark.parametrize("cls", [GaussianNB, LinearDiscriminantAnalysis])
def test_row_permutation_invariance(cls):
    X, y = blobs(4, n=50)
    perm = np.random.default_rng(0).permutation(50)
    probe = np.random.default_rng(1).normal(size=(20, 3))
    a = cls().fit(X, y).decision_function(probe)
    b = cls().fit(X[perm], y[perm]).decision_function(probe)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("cls", [GaussianNB, LinearDiscriminantAnalysis])
def test_label_flip_flips_predictions(cls):
    X, y = blobs(5, n=40, sep=0.3)
    probe = np.random.default_rng(2).normal(size=(30, 3))
    a = cls().fit(X, y).predict(probe)
    b = cls().fit(X, 1 - y).predict(probe)
    np.testing.assert_array_equal(a, 1 - b)


# SVM


def test_svm_two_points_max_margin():
    X = np.array([[-1.0], [1.0]])
    model = SVC(C=1e6, kernel="linear").fit(X, [0, 1])
    w = model.dual_coef_ @ model.support_vectors_
    assert w[0] == pytest.approx(1.0, abs=1e-9)
    assert model.intercept_ == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(model.decision_function(X), [-1.0, 1.0], atol=1e-9)


def test_svm_xor_needs_rbf():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    assert SVC(C=10, kernel="rbf", gamma=1.0).fit(X, y).score(X, y) == 1.0
    assert SVC(C=10, kernel="linear").fit(X, y).score(X, y) <= 0.75


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
@pytest.mark.parametrize("seed", range(12))
def test_svm_dual_matches_exhaustive_oracle(kernel, seed):
    rng = np.random.default_rng(seed)
    n = 3 + seed % 2
    X = rng.normal(size=(n, 2))
    y = np.r_[0, 1, rng.integers(0, 2, size=n - 2)]
    C = float(rng.choice([0.5, 1.0, 5.0]))
    model = SVC(C=C, kernel=kernel, gamma=0.7).fit(X, y)
    K = _kernel(kernel, 0.7, X, X)
    best, _ = svm_dual_optimum(K, y, C)
    assert model.dual_objective_ == pytest.approx(best, abs=1e-3)


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
@pytest.mark.parametrize("seed", range(4))
def test_svm_kkt_and_constraints(kernel, seed):
    X, y = blobs(seed, n=80, sep=0.6)
    model = SVC(C=1.0, kernel=kernel).fit(X, y)
    assert model.converged_
    assert kkt_violation(model, X, y) <= model.tol
    sign = np.where(y == 1, 1.0, -1.0)
    assert abs(model.alpha_ @ sign) <= 1e-9
    assert model.alpha_.min() >= 0 and model.alpha_.max() <= model.C
    assert np.all(np.diff(model.dual_objective_history_) >= -1e-12)


def test_svm_default_gamma():
    X, y = blobs(0, d=4)
    assert SVC().fit(X, y).gamma_ == 0.25


# shared contract


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_label_agrees_with_score_sign(est):
    X, y = blobs(6, sep=0.3)
    model = clone(est).fit(X, y)
    probe = np.random.default_rng(3).normal(size=(50, 3))
    scores = model.decision_function(probe)
    np.testing.assert_array_equal(model.predict(probe), (scores >= 0).astype(int))
    assert np.isfinite(scores).all()


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_separated_training_set_reproduced(est):
    X, y = blobs(7, sep=4.0)
    model = clone(est).fit(X, y)
    np.testing.assert_array_equal(model.predict(X), y)


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_single_class_rejected(est):
    with pytest.raises(SingleClass):
        clone(est).fit(np.ones((4, 2)), [1, 1, 1, 1])


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_dimension_mismatch(est):
    X, y = blobs(8)
    model = clone(est).fit(X, y)
    with pytest.raises(DimensionMismatch):
        model.decision_function(np.ones((2, 5)))


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_json_document(est):
    X, y = blobs(9)
    doc = json.loads(model_to_json(clone(est).fit(X, y)))
    assert doc["kind"] in {"logistic", "naive_bayes", "lda", "svm"}
    assert doc["params"] == est.get_params()
