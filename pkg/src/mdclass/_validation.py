"""Input validation shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .dataset import Dataset
from .exceptions import DimensionMismatch, SingleClass


def values_and_mask(X, mask=None):
    """Return ``(values, mask)`` for a Dataset or an array using NaN as missing.

    An explicit ``mask`` takes precedence over NaN detection; values under a
    false mask entry are never inspected.
    """
    if isinstance(X, Dataset):
        return X.values, X.mask
    if mask is None:
        values = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        return values, ~np.isnan(values)
    values = np.array(X, dtype=float, copy=True)
    mask = np.asarray(mask, dtype=bool)
    if values.ndim != 2 or mask.shape != values.shape:
        raise ValueError("X and mask must be 2-d arrays of equal shape")
    if not np.isfinite(values[mask]).all():
        raise ValueError("observed cells must be finite")
    return values, mask


def complete_matrix(X):
    """A finite 2-d float array (no missing cells allowed)."""
    if isinstance(X, Dataset):
        if not X.mask.all():
            raise ValueError("expected a fully observed matrix")
        return np.array(X.values)
    return check_array(X, dtype=float)


def binary_problem(X, y):
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    y = y.astype(int)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise SingleClass("training data contain a single class")
    return X, y


def check_n_features(estimator, X):
    if X.shape[1] != estimator.n_features_in_:
        raise DimensionMismatch(
            f"X has {X.shape[1]} features, {type(estimator).__name__} "
            f"was fitted with {estimator.n_features_in_}"
        )
