"""Small numerical kernels shared by the rest of the package.

SPD factorization and solves, the two-sided Student-t tail probability, and
a seeded random stream that can be split into independent named children.
"""

import hashlib
import math

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NotPositiveDefinite

_SYM_RTOL = 1e-10
_CF_RTOL = 1e-12
_CF_MAX_ITER = 300
_TINY = np.finfo(float).tiny


def cholesky_spd(a):
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive. Callers owning a covariance
        estimate are expected to add a ridge and retry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > _SYM_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(low) > 0):
        raise NotPositiveDefinite("zero pivot")
    return low


def solve_spd(a, b):
    """Solve ``a @ x = b`` for SPD ``a``; ``b`` may be a vector or a matrix."""
    low = cholesky_spd(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != low.shape[0]:
        raise ValueError("right-hand side has the wrong length")
    y = solve_triangular(low, b, lower=True)
    return solve_triangular(low.T, y, lower=False)


def _beta_continued_fraction(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_RTOL:
            break
    return h


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t, df):
    """P(|T| >= |t|) for T following a Student-t law with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("df must be positive")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    p = regularized_incomplete_beta(0.5 * df, 0.5, x)
    return min(1.0, max(p, _TINY))


def _derive_seed(seed, label):
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RandomStream:
    """Seeded Philox stream; ``child(label)`` derives an independent stream.

    Children depend only on the parent seed and the label, never on how much
    of the parent has been consumed, so work can be split across processes in
    any order.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(seed))

    def __repr__(self):
        return f"RandomStream(seed={self.seed})"

    def child(self, label):
        return RandomStream(_derive_seed(self.seed, label))

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def permutation(self, n):
        return permutation(n, self)


def permutation(n, stream):
    """Uniform random permutation of ``0..n-1`` by Fisher-Yates shuffling."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = np.arange(n)
    if n == 1:
        return out
    # j_i uniform on [0, i], drawn for i = n-1 down to 1
    picks = stream.integers(0, np.arange(n, 1, -1))
    for i, j in zip(range(n - 1, 0, -1), picks):
        out[i], out[j] = out[j], out[i]
    return out
