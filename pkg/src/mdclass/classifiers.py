"""Binary classifiers sharing one contract.

Every estimator exposes ``decision_function`` (a real score, larger means
more likely positive) and ``predict``, which returns 1 exactly when the
score is >= 0. Labels are 0/1.
"""

import json
import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import binary_problem, check_n_features
from .exceptions import ClassifierBreakdown, ConvergenceWarning, NotPositiveDefinite
from .numerics import cholesky_spd, solve_spd

_MAX_HALVINGS = 30
_RIDGE_ESCALATIONS = 3


class _BinaryClassifier(ClassifierMixin, BaseEstimator):
    kind = None

    def _validate(self, X, y):
        X, y = binary_problem(X, y)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return X, y

    def _check_X(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        check_n_features(self, X)
        return X

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)

    def to_dict(self):
        check_is_fitted(self)
        out = {"kind": self.kind, "params": self.get_params()}
        for name, value in sorted(vars(self).items()):
            if name.endswith("_") and not name.startswith("_"):
                out[name] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


def logistic_objective(w, b, X, y, l2):
    """Penalized negative log-likelihood and its gradient (intercept last)."""
    z = X @ w + b
    loss = np.logaddexp(0.0, z).sum() - y @ z + 0.5 * l2 * (w @ w)
    resid = 1.0 / (1.0 + np.exp(-z)) - y
    grad = np.r_[X.T @ resid + l2 * w, resid.sum()]
    return loss, grad


class LogisticRegression(_BinaryClassifier):
    """L2-penalized logistic regression fitted by damped Newton steps.

    The intercept is not penalized. Each Newton step is halved until the
    objective stops increasing; iteration ends when the gradient's largest
    component is at most ``tol``. The score is the log-odds.
    """

    kind = "logistic"

    def __init__(self, l2=1e-4, tol=1e-8, max_iter=100):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter

    @classmethod
    def from_parameters(cls, coef, intercept, **params):
        model = cls(**params)
        model.coef_ = np.asarray(coef, dtype=float)
        model.intercept_ = float(intercept)
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = model.coef_.size
        return model

    def fit(self, X, y):
        X, y = self._validate(X, y)
        n, d = X.shape
        design = np.c_[X, np.ones(n)]
        penalty = np.r_[np.full(d, self.l2), 0.0]
        beta = np.zeros(d + 1)
        loss, grad = logistic_objective(beta[:-1], beta[-1], X, y, self.l2)
        self.loss_history_ = [float(loss)]
        converged = False
        for it in range(self.max_iter + 1):
            if np.abs(grad).max() <= self.tol:
                converged = True
                break
            if it == self.max_iter:
                break
            p = 1.0 / (1.0 + np.exp(-(design @ beta)))
            hess = (design * (p * (1.0 - p))[:, None]).T @ design + np.diag(penalty)
            try:
                step = solve_spd(hess, grad)
            except NotPositiveDefinite:
                step = solve_spd(hess + 1e-10 * np.eye(d + 1), grad)
            scale = 1.0
            for _ in range(_MAX_HALVINGS + 1):
                trial = beta - scale * step
                trial_loss, trial_grad = logistic_objective(trial[:-1], trial[-1], X, y, self.l2)
                if trial_loss <= loss:
                    break
                scale *= 0.5
            else:
                break
            beta, loss, grad = trial, trial_loss, trial_grad
            self.loss_history_.append(float(loss))

        self.coef_ = beta[:-1]
        self.intercept_ = float(beta[-1])
        self.n_iter_ = len(self.loss_history_) - 1
        self.gradient_norm_ = float(np.abs(grad).max())
        self.converged_ = converged
        if not converged:
            warnings.warn(
                f"Newton iteration stopped with gradient norm {self.gradient_norm_:.3g}",
                ConvergenceWarning,
            )
        return self

    def decision_function(self, X):
        X = self._check_X(X)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.c_[1.0 - p, p]


class GaussianNB(_BinaryClassifier):
    """Gaussian naive Bayes; the score is the log posterior odds.

    Class variances use denominator ``n_c`` and are floored by
    ``var_smoothing`` times the largest feature variance.
    """

    kind = "naive_bayes"

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X, y = self._validate(X, y)
        self.epsilon_ = self.var_smoothing * X.var(axis=0).max()
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.array([X[y == c].var(axis=0) for c in (0, 1)]) + self.epsilon_
        if not (self.var_ > 0).all():
            # every feature constant: any positive floor keeps the densities proper
            self.var_ = np.where(self.var_ > 0, self.var_, self.var_smoothing or 1e-9)
        self.class_prior_ = np.array([np.mean(y == c) for c in (0, 1)])
        return self

    def _joint_log_likelihood(self, X):
        out = []
        for c in (0, 1):
            ll = -0.5 * (np.log(2.0 * np.pi * self.var_[c]) + (X - self.theta_[c]) ** 2 / self.var_[c])
            out.append(ll.sum(axis=1) + np.log(self.class_prior_[c]))
        return out

    def decision_function(self, X):
        X = self._check_X(X)
        neg, pos = self._joint_log_likelihood(X)
        return pos - neg


class LinearDiscriminantAnalysis(_BinaryClassifier):
    """Two-class LDA with a pooled covariance (denominator ``n - 2``) plus ridge."""

    kind = "lda"

    def __init__(self, ridge=1e-6):
        self.ridge = ridge

    @classmethod
    def from_parameters(cls, means, covariance, priors, **params):
        model = cls(**params)
        model.means_ = np.asarray(means, dtype=float)
        model.covariance_ = np.asarray(covariance, dtype=float)
        model.priors_ = np.asarray(priors, dtype=float)
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = model.means_.shape[1]
        model._set_discriminant()
        return model

    def fit(self, X, y):
        X, y = self._validate(X, y)
        n, d = X.shape
        self.means_ = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
        self.priors_ = np.array([np.mean(y == c) for c in (0, 1)])
        centred = X - self.means_[y]
        scatter = centred.T @ centred / max(n - 2, 1)
        ridge = self.ridge
        for _ in range(_RIDGE_ESCALATIONS + 1):
            cov = scatter + ridge * np.eye(d)
            try:
                cholesky_spd(cov)
                break
            except NotPositiveDefinite:
                ridge = ridge * 10.0 if ridge > 0 else 1e-6
        else:
            raise ClassifierBreakdown("pooled covariance is singular after ridge escalation")
        self.covariance_ = cov
        self.ridge_ = ridge
        self._set_discriminant()
        return self

    def _set_discriminant(self):
        # delta_c(x) = x' S^-1 mu_c - mu_c' S^-1 mu_c / 2 + log pi_c
        proj = solve_spd(self.covariance_, self.means_.T).T
        offsets = -0.5 * np.einsum("ij,ij->i", proj, self.means_) + np.log(self.priors_)
        self.coef_ = proj[1] - proj[0]
        self.intercept_ = float(offsets[1] - offsets[0])

    def decision_function(self, X):
        X = self._check_X(X)
        return X @ self.coef_ + self.intercept_


def _kernel(kind, gamma, A, B):
    if kind == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class SVC(_BinaryClassifier):
    """Soft-margin support vector machine trained by sequential minimal optimization.

    Each step picks the training point that most violates its optimality
    condition and pairs it with the point whose prediction error differs the
    most in the admissible direction, then solves the two-variable problem
    in closed form with box clipping. Training stops once every condition
    holds within ``tol``. ``max_passes`` consecutive steps without progress
    also end training; so does the ``max_updates`` cap.

    Parameters
    ----------
    C : float, default=1.0
    kernel : {"rbf", "linear"}, default="rbf"
    gamma : float or None, default=None
        RBF width; ``None`` means ``1 / n_features``.
    tol : float, default=1e-3
    max_passes : int, default=10
    max_updates : int, default=100000
    """

    kind = "svm"

    def __init__(self, C=1.0, kernel="rbf", gamma=None, tol=1e-3, max_passes=10,
                 max_updates=100_000):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.max_updates = max_updates

    def fit(self, X, y):
        X, y = self._validate(X, y)
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        n, d = X.shape
        self.gamma_ = float(self.gamma) if self.gamma is not None else 1.0 / d
        C = float(self.C)
        sign = np.where(y == 1, 1.0, -1.0)
        K = _kernel(self.kernel, self.gamma_, X, X)
        Q = sign[:, None] * sign[None, :] * K
        alpha = np.zeros(n)
        grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a)
        history = [0.0]
        stalls = 0
        updates = 0
        converged = False

        while True:
            up = ((sign > 0) & (alpha < C)) | ((sign < 0) & (alpha > 0))
            low = ((sign > 0) & (alpha > 0)) | ((sign < 0) & (alpha < C))
            score = -sign * grad
            i = int(np.flatnonzero(up)[np.argmax(score[up])])
            j = int(np.flatnonzero(low)[np.argmin(score[low])])
            gap = score[i] - score[j]
            if gap <= self.tol:
                converged = True
                break
            if updates >= self.max_updates or stalls >= self.max_passes:
                break

            # errors E = f(x) - y differ by sign*grad, independent of the bias
            err_i, err_j = sign[i] * grad[i], sign[j] * grad[j]
            eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
            eta = max(eta, 1e-12)
            if sign[i] != sign[j]:
                lo, hi = max(0.0, alpha[j] - alpha[i]), min(C, C + alpha[j] - alpha[i])
            else:
                lo, hi = max(0.0, alpha[i] + alpha[j] - C), min(C, alpha[i] + alpha[j])
            new_j = min(max(alpha[j] + sign[j] * (err_i - err_j) / eta, lo), hi)
            new_i = alpha[i] + sign[i] * sign[j] * (alpha[j] - new_j)
            new_i = min(max(new_i, 0.0), C)
            # snap rounding residue onto the box so bound variables stay bound
            snap = 1e-12 * C
            new_i = 0.0 if new_i < snap else C if new_i > C - snap else new_i
            new_j = 0.0 if new_j < snap else C if new_j > C - snap else new_j
            delta_i, delta_j = new_i - alpha[i], new_j - alpha[j]
            updates += 1
            if abs(delta_i) < 1e-15 and abs(delta_j) < 1e-15:
                stalls += 1
                continue
            stalls = 0
            alpha[i], alpha[j] = new_i, new_j
            grad += Q[:, i] * delta_i + Q[:, j] * delta_j
            history.append(0.5 * alpha @ (1.0 - grad))

        score = -sign * grad
        free = (alpha > 0) & (alpha < C)
        if free.any():
            bias = score[free].mean()
        else:
            up = ((sign > 0) & (alpha < C)) | ((sign < 0) & (alpha > 0))
            low = ((sign > 0) & (alpha > 0)) | ((sign < 0) & (alpha < C))
            hi_b = score[up].max() if up.any() else score[low].min()
            lo_b = score[low].min() if low.any() else hi_b
            bias = 0.5 * (hi_b + lo_b)

        support = alpha > 0
        self.alpha_ = alpha
        self.support_ = np.flatnonzero(support)
        self.support_vectors_ = X[support]
        self.dual_coef_ = (alpha * sign)[support]
        self.intercept_ = float(bias)
        self.dual_objective_history_ = history
        self.dual_objective_ = history[-1]
        self.kkt_gap_ = float(gap)
        self.n_updates_ = updates
        self.converged_ = converged
        if not converged:
            warnings.warn(f"SMO stopped with KKT gap {gap:.3g}", ConvergenceWarning)
        return self

    def decision_function(self, X):
        X = self._check_X(X)
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        K = _kernel(self.kernel, self.gamma_, X, self.support_vectors_)
        return K @ self.dual_coef_ + self.intercept_


CLASSIFIERS = {
    "logistic": LogisticRegression,
    "naive_bayes": GaussianNB,
    "lda": LinearDiscriminantAnalysis,
    "svm": SVC,
}


def train_logistic(X, y, **opts):
    return LogisticRegression(**opts).fit(X, y)


def train_gaussian_nb(X, y, **opts):
    return GaussianNB(**opts).fit(X, y)


def train_lda(X, y, **opts):
    return LinearDiscriminantAnalysis(**opts).fit(X, y)


def train_svm_smo(X, y, **opts):
    return SVC(**opts).fit(X, y)


def predict_score(model, X):
    return model.decision_function(X)


def predict_label(model, X):
    return model.predict(X)


def model_to_json(model):
    return json.dumps(model.to_dict(), sort_keys=True, indent=2)
