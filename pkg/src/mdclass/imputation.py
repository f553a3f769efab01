"""Mean, k-nearest-neighbour and EM (multivariate normal) imputation.

The functions take ``X`` with NaN marking missing cells, or ``X`` plus an
explicit boolean ``mask`` (True = observed). Observed cells are always copied
through untouched.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import values_and_mask
from .exceptions import (
    DimensionMismatch,
    EmptyColumn,
    NotPositiveDefinite,
    NumericalBreakdown,
)
from .numerics import cholesky_spd

_LOG_2PI = np.log(2.0 * np.pi)
_RIDGE_ESCALATIONS = 3


@dataclass(frozen=True)
class MeanModel:
    column_means: np.ndarray


@dataclass(frozen=True)
class EmModel:
    mu: np.ndarray
    sigma: np.ndarray
    iterations_run: int
    final_loglik: float
    converged: bool
    loglik_history: tuple = field(default=(), repr=False)
    ridge: float = 0.0


def _observed_column_means(values, mask):
    counts = mask.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyColumn(int(empty[0]))
    return np.where(mask, values, 0.0).sum(axis=0) / counts


def fit_mean(X, mask=None):
    values, mask = values_and_mask(X, mask)
    return MeanModel(_observed_column_means(values, mask))


class _Pattern:
    """Row indices sharing one missingness pattern, with cached index grids."""

    __slots__ = ("o", "m", "rows", "ro", "rm", "oo", "om", "mm")

    def __init__(self, obs, rows):
        self.o = np.flatnonzero(obs)
        self.m = np.flatnonzero(~obs)
        self.rows = rows
        self.ro = np.ix_(rows, self.o)
        self.rm = np.ix_(rows, self.m)
        self.oo = np.ix_(self.o, self.o)
        self.om = np.ix_(self.o, self.m)
        self.mm = np.ix_(self.m, self.m)


def _patterns(mask):
    """Group rows by missingness pattern, in first-seen order."""
    groups = {}
    for i, row in enumerate(mask):
        groups.setdefault(row.tobytes(), []).append(i)
    return [_Pattern(mask[rows[0]], np.array(rows)) for rows in groups.values()]


def _e_step(values, patterns, mu, sigma):
    """Conditional expectations, summed conditional covariance and observed log-likelihood.

    Each missingness pattern factors its observed covariance block once.
    """
    n, d = values.shape
    filled = np.empty((n, d))
    cond_cov = np.zeros((d, d))
    loglik = 0.0
    for pat in patterns:
        count = pat.rows.size
        if pat.o.size == 0:
            filled[pat.rm] = mu
            cond_cov += count * sigma
            continue
        x_o = values[pat.ro]
        filled[pat.ro] = x_o
        try:
            low = np.linalg.cholesky(sigma[pat.oo])
        except np.linalg.LinAlgError:
            raise NumericalBreakdown("observed covariance block is not positive definite") from None
        resid = x_o - mu[pat.o]
        z = solve_triangular(low, resid.T, lower=True, check_finite=False)
        logdet = 2.0 * np.log(low.diagonal()).sum()
        loglik -= 0.5 * (count * (pat.o.size * _LOG_2PI + logdet) + (z * z).sum())
        if pat.m.size == 0:
            continue
        # regression coefficients of the missing block on the observed block
        half = solve_triangular(low, sigma[pat.om], lower=True, check_finite=False)
        coef = solve_triangular(low.T, half, lower=False, check_finite=False)
        filled[pat.rm] = mu[pat.m] + resid @ coef
        cond_cov[pat.mm] += count * (sigma[pat.mm] - half.T @ half)
    return filled, cond_cov, loglik


def observed_loglik(X, mu, sigma, mask=None):
    """Observed-data log-likelihood of incomplete rows under N(mu, sigma)."""
    values, mask = values_and_mask(X, mask)
    return _e_step(values, _patterns(mask), np.asarray(mu), np.asarray(sigma))[2]


def _regularize(cov, ridge):
    """Add ``ridge`` to the diagonal, escalating by 10x until positive definite."""
    d = cov.shape[0]
    for _ in range(_RIDGE_ESCALATIONS + 1):
        sigma = cov + ridge * np.eye(d)
        sigma = 0.5 * (sigma + sigma.T)
        try:
            cholesky_spd(sigma)
            return sigma, ridge
        except NotPositiveDefinite:
            ridge = ridge * 10.0 if ridge > 0 else 1e-6
    raise NumericalBreakdown("covariance is not positive definite after ridge escalation")


def fit_em(X, mask=None, tol=1e-6, max_iter=500, ridge=1e-6):
    """Maximum-likelihood mean and covariance of a multivariate normal from incomplete rows.

    Starts from the mean-imputed data, then alternates conditional
    expectations of the missing coordinates with closed-form updates (MLE
    denominator ``n`` plus ``ridge`` on the diagonal). Stops when the
    observed-data log-likelihood improves by less than ``tol``.
    """
    values, mask = values_and_mask(X, mask)
    n, d = values.shape
    if n < 2:
        raise ValueError("EM needs at least two rows")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    means = _observed_column_means(values, mask)
    start = np.where(mask, values, means)
    centred = start - means
    sigma, ridge = _regularize(centred.T @ centred / n, ridge)
    mu = means

    patterns = _patterns(mask)
    filled, cond_cov, loglik = _e_step(values, patterns, mu, sigma)
    history = [loglik]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = filled.mean(axis=0)
        centred = filled - mu
        sigma, ridge = _regularize((centred.T @ centred + cond_cov) / n, ridge)
        filled, cond_cov, new_loglik = _e_step(values, patterns, mu, sigma)
        history.append(new_loglik)
        gain = new_loglik - loglik
        loglik = new_loglik
        if gain < tol:
            converged = True
            break
    return EmModel(mu, sigma, it, float(loglik), converged, tuple(history), ridge)


def impute_with_model(model, X, mask=None):
    """Fill missing cells from a fitted mean or EM model."""
    values, mask = values_and_mask(X, mask)
    if isinstance(model, MeanModel):
        if values.shape[1] != model.column_means.size:
            raise DimensionMismatch("feature count differs from the fitted model")
        return np.where(mask, values, model.column_means)
    if isinstance(model, EmModel):
        if values.shape[1] != model.mu.size:
            raise DimensionMismatch("feature count differs from the fitted model")
        filled = _e_step(values, _patterns(mask), model.mu, model.sigma)[0]
        # observed cells are copied verbatim, never recomputed
        return np.where(mask, values, filled)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _standardization(values, mask):
    # columns never observed get mean 0 / std 1; they are never shared anyway
    counts = np.maximum(mask.sum(axis=0), 1)
    means = np.where(mask, values, 0.0).sum(axis=0) / counts
    std = np.sqrt((np.where(mask, values - means, 0.0) ** 2).sum(axis=0) / counts)
    std[std == 0] = 1.0
    return means, std


def impute_knn(reference, target, k=3, reference_mask=None, target_mask=None):
    """k-nearest-neighbour imputation with partial standardized distances.

    The distance between a target row and a donor is Euclidean over the
    features observed in both, after standardizing with the reference's
    observed means and standard deviations, and scaled by ``d / |shared|``.
    A missing cell takes the mean of the ``k`` nearest donors that observe
    it (ties go to the lower donor index). Without any donor the reference
    column mean is used.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ref, ref_mask = values_and_mask(reference, reference_mask)
    tgt, tgt_mask = values_and_mask(target, target_mask)
    if ref.shape[1] != tgt.shape[1]:
        raise DimensionMismatch("reference and target have different feature counts")
    if ref.shape[0] == 0:
        raise ValueError("reference must contain rows")
    d = ref.shape[1]
    ref_counts = ref_mask.sum(axis=0)
    means, std = _standardization(ref, ref_mask)

    ref_z = np.where(ref_mask, (ref - means) / std, 0.0)
    out = np.where(tgt_mask, tgt, np.nan)
    for i in np.flatnonzero(~tgt_mask.all(axis=1)):
        row_mask = tgt_mask[i]
        row_z = np.where(row_mask, (tgt[i] - means) / std, 0.0)
        shared = ref_mask & row_mask
        n_shared = shared.sum(axis=1)
        sq = np.where(shared, ref_z - row_z, 0.0) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.sqrt(d / n_shared * sq.sum(axis=1))
        usable = n_shared > 0
        for j in np.flatnonzero(~row_mask):
            donors = np.flatnonzero(usable & ref_mask[:, j])
            if donors.size == 0:
                if ref_counts[j] == 0:
                    raise EmptyColumn(int(j))
                out[i, j] = means[j]
                continue
            nearest = donors[np.argsort(dist[donors], kind="stable")[:k]]
            out[i, j] = ref[nearest, j].mean()
    return out


class _ImputerMixin(TransformerMixin):
    """``fit`` / ``transform`` accept an optional explicit observed-mask."""

    def fit_transform(self, X, y=None, mask=None):
        return self.fit(X, y, mask=mask).transform(X, mask=mask)

    def _check_width(self, values):
        if values.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"X has {values.shape[1]} features, expected {self.n_features_in_}"
            )


class MeanImputer(_ImputerMixin, BaseEstimator):
    """Replace each missing cell with its column's observed mean."""

    def fit(self, X, y=None, mask=None):
        values, mask = values_and_mask(X, mask)
        self.model_ = fit_mean(values, mask)
        self.statistics_ = self.model_.column_means
        self.n_features_in_ = values.shape[1]
        return self

    def transform(self, X, mask=None):
        check_is_fitted(self, "model_")
        values, mask = values_and_mask(X, mask)
        self._check_width(values)
        return impute_with_model(self.model_, values, mask)


class KNNImputer(_ImputerMixin, BaseEstimator):
    """Impute from the ``n_neighbors`` most similar rows of the fitted data.

    Parameters
    ----------
    n_neighbors : int, default=3
        Number of donors averaged per missing cell.
    """

    def __init__(self, n_neighbors=3):
        self.n_neighbors = n_neighbors

    def fit(self, X, y=None, mask=None):
        values, mask = values_and_mask(X, mask)
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be at least 1")
        _observed_column_means(values, mask)
        self.reference_ = np.where(mask, values, np.nan)
        self.reference_mask_ = mask.copy()
        self.n_features_in_ = values.shape[1]
        return self

    def transform(self, X, mask=None):
        check_is_fitted(self, "reference_")
        values, mask = values_and_mask(X, mask)
        self._check_width(values)
        return impute_knn(
            self.reference_, values, self.n_neighbors,
            reference_mask=self.reference_mask_, target_mask=mask,
        )


class EMImputer(_ImputerMixin, BaseEstimator):
    """Conditional-mean imputation under a multivariate normal fitted by EM.

    Parameters
    ----------
    tol : float, default=1e-6
        Stop once the observed-data log-likelihood gains less than this.
    max_iter : int, default=500
    ridge : float, default=1e-6
        Added to the covariance diagonal after every update.

    Attributes
    ----------
    model_ : EmModel
        Fitted mean ``mu``, covariance ``sigma`` and the log-likelihood trace.
    """

    def __init__(self, tol=1e-6, max_iter=500, ridge=1e-6):
        self.tol = tol
        self.max_iter = max_iter
        self.ridge = ridge

    def fit(self, X, y=None, mask=None):
        values, mask = values_and_mask(X, mask)
        self.model_ = fit_em(values, mask, self.tol, self.max_iter, self.ridge)
        self.n_features_in_ = values.shape[1]
        return self

    def transform(self, X, mask=None):
        check_is_fitted(self, "model_")
        values, mask = values_and_mask(X, mask)
        self._check_width(values)
        return impute_with_model(self.model_, values, mask)
