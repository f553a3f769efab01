"""Two-sample t-test feature selection."""

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import complete_matrix
from .exceptions import ClassTooSmall, DimensionMismatch, NoFeaturesSelected
from .numerics import student_t_two_sided_p

VARIANTS = ("pooled", "welch")


@dataclass(frozen=True)
class SelectionReport:
    t_stat: np.ndarray
    df: np.ndarray
    p_value: np.ndarray
    selected: np.ndarray
    alpha: float = 0.05
    variant: str = "pooled"
    feature_names: tuple = ()
    kept_all_on_empty: bool = False

    @property
    def n_features(self):
        return self.t_stat.size

    def to_csv(self, comment=None):
        lines = [f"# {comment}"] if comment else []
        lines.append("feature_name,t_stat,df,p_value,selected")
        names = self.feature_names or tuple(f"x{j}" for j in range(self.n_features))
        for j, name in enumerate(names):
            lines.append(
                f"{name},{self.t_stat[j]!r},{self.df[j]!r},{self.p_value[j]!r},"
                f"{str(bool(self.selected[j])).lower()}"
            )
        return "\n".join(lines) + "\n"


def _feature_test(a, b, variant):
    # a: class 1 sample, b: class 0 sample
    n1, n0 = a.size, b.size
    m1, m0 = a.mean(), b.mean()
    v1, v0 = a.var(ddof=1), b.var(ddof=1)
    diff = m1 - m0
    if variant == "pooled":
        df = float(n0 + n1 - 2)
        pooled = ((n0 - 1) * v0 + (n1 - 1) * v1) / df
        se2 = pooled * (1.0 / n0 + 1.0 / n1)
    else:
        q1, q0 = v1 / n1, v0 / n0
        se2 = q1 + q0
        if se2 > 0:
            df = se2 ** 2 / (q1 ** 2 / (n1 - 1) + q0 ** 2 / (n0 - 1))
        else:
            df = float(n0 + n1 - 2)
    if se2 <= 0:
        if diff == 0:
            return 0.0, df, 1.0
        # constant within each class but separated: kept, p = 0
        return math.copysign(math.inf, diff), df, 0.0
    t = diff / math.sqrt(se2)
    return t, df, student_t_two_sided_p(t, df)


def t_test_select(X, y, alpha=0.05, variant="pooled", feature_names=()):
    """Per-feature two-sample t-test of class 1 against class 0.

    A feature is selected when its two-sided p-value is below ``alpha``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    X = complete_matrix(X)
    y = np.asarray(y, dtype=int)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("labels must have one entry per row")
    pos, neg = X[y == 1], X[y == 0]
    if pos.shape[0] < 2 or neg.shape[0] < 2:
        raise ClassTooSmall("each class needs at least two instances")
    stats = [_feature_test(pos[:, j], neg[:, j], variant) for j in range(X.shape[1])]
    t, df, p = (np.array(col, dtype=float) for col in zip(*stats))
    return SelectionReport(t, df, p, p < alpha, alpha, variant, tuple(feature_names))


def project_features(X, report, keep_all_on_empty=False):
    """Columns of ``X`` whose feature was selected, in their original order.

    Returns ``(projected, report)``; the report is flagged when nothing was
    selected and ``keep_all_on_empty`` let every column through.
    """
    X = np.asarray(X)
    if X.shape[1] != report.n_features:
        raise DimensionMismatch("report and matrix disagree on feature count")
    if not report.selected.any():
        if not keep_all_on_empty:
            raise NoFeaturesSelected(f"no feature has p < {report.alpha}")
        return X, replace(report, kept_all_on_empty=True)
    return X[:, report.selected], report


class TTestSelector(SelectorMixin, BaseEstimator):
    """Keep features whose class means differ at significance ``alpha``.

    Parameters
    ----------
    alpha : float, default=0.05
    variant : {"pooled", "welch"}, default="pooled"
    keep_all_on_empty : bool, default=False
        Keep every feature instead of raising when none is significant.
    """

    def __init__(self, alpha=0.05, variant="pooled", keep_all_on_empty=False):
        self.alpha = alpha
        self.variant = variant
        self.keep_all_on_empty = keep_all_on_empty

    def fit(self, X, y, feature_names=()):
        report = t_test_select(X, y, self.alpha, self.variant, feature_names)
        if not report.selected.any():
            if not self.keep_all_on_empty:
                raise NoFeaturesSelected(f"no feature has p < {self.alpha}")
            report = replace(report, kept_all_on_empty=True)
        self.report_ = report
        self.n_features_in_ = report.n_features
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "report_")
        if self.report_.kept_all_on_empty:
            return np.ones(self.n_features_in_, dtype=bool)
        return self.report_.selected
