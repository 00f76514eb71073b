"""Symmetric linear algebra, chi-squared distribution functions and
reproducible multivariate normal sampling.

Randomness comes from :class:`SeededStream`, an immutable descriptor of a
Philox4x64-10 counter-based stream. Draw ``i`` of a stream depends only on
``(master_seed, stream_index, i)``, so results never depend on how work is
split across processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from . import kernels
from .errors import DomainError, NotPositiveSemiDefinite, SingularMatrix

__all__ = [
    "PSD_TOL",
    "SeededStream",
    "cholesky",
    "psd_factor",
    "solve_psd",
    "chi2_cdf",
    "chi2_sf",
    "chi2_pdf",
    "chi2_quantile",
    "chi2_isf",
    "normal_quantile",
    "sample_mvn",
]

#: relative pivot tolerance (times the largest diagonal entry)
PSD_TOL = 1e-10
_MASK64 = (1 << 64) - 1


def _mix64(x):
    # splitmix64 finaliser
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SeededStream:
    """Key of an independent random stream.

    Two streams with distinct ``(master_seed, stream_index)`` pairs are
    keyed differently in the Philox cipher and behave as independent
    sequences. The same pair always reproduces the same sequence.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.stream_index < 0:
            raise DomainError("stream_index must be nonnegative")
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_index", int(self.stream_index) & _MASK64)

    def child(self, index: int) -> "SeededStream":
        """Derived stream for a sub-task (a column, a test, a batch, ...)."""
        if index < 0:
            raise DomainError("child index must be nonnegative")
        return SeededStream(self.master_seed, _mix64(_mix64(self.stream_index) ^ (index + 1)))

    def normals(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.normals(self.master_seed, self.stream_index, start, int(count))

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.uniforms(self.master_seed, self.stream_index, start, int(count))

    def raw(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.raw_words(self.master_seed, self.stream_index, start, int(count))


def _validated(sigma):
    a = np.array(sigma, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        return a, 0.0
    scale = float(np.max(np.abs(a)))
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T)) > 1e-12 * max(scale, 1e-300):
        raise DomainError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    return a, PSD_TOL * max(float(np.max(np.diag(a))), 0.0)


def cholesky(sigma, nonsingular: bool = False) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == sigma``.

    Positive semidefinite input is accepted: a pivot within
    ``PSD_TOL * max(diag)`` of zero zeroes its column. With
    ``nonsingular=True`` such a pivot raises :class:`SingularMatrix`
    instead. A pivot below ``-PSD_TOL * max(diag)`` raises
    :class:`NotPositiveSemiDefinite`.
    """
    a, tol = _validated(sigma)
    if a.shape[0] == 0:
        return a
    L, status, where = kernels.psd_cholesky(a, tol, bool(nonsingular))
    if status == 1:
        raise NotPositiveSemiDefinite(f"negative pivot at index {where}")
    if status == 2:
        raise NotPositiveSemiDefinite(f"zero pivot with nonzero column at index {where}")
    if status == 3:
        raise SingularMatrix(f"vanishing pivot at index {where}")
    return L


def psd_factor(sigma) -> np.ndarray:
    """A square root ``F`` with ``F @ F.T == sigma`` for PSD ``sigma``.

    Uses Cholesky with diagonal pivoting, which stays accurate on
    rank-deficient input where the plain factorization can break down;
    ``F`` is a row permutation of a lower-triangular matrix.
    """
    a, tol = _validated(sigma)
    if a.shape[0] == 0:
        return a
    L, perm, status, where, _ = kernels.psd_cholesky_pivoted(a, tol)
    if status == 1:
        raise NotPositiveSemiDefinite(f"negative pivot at index {where}")
    if status == 2:
        raise NotPositiveSemiDefinite(f"nonzero residual at index {where} after the rank was exhausted")
    F = np.empty_like(L)
    F[np.asarray(perm)] = L
    return F


def solve_psd(sigma, rhs, error=SingularMatrix):
    """Solve ``sigma x = rhs`` for nonsingular symmetric ``sigma``."""
    try:
        L = cholesky(sigma, nonsingular=True)
    except NotPositiveSemiDefinite as exc:
        raise error(str(exc)) from exc
    y = _forward(L, np.asarray(rhs, dtype=np.float64))
    return _backward(L.T, y)


def _forward(L, b):
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def _backward(U, b):
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(U.shape[0] - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


# --- regularized incomplete gamma -------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a, x):
    # P(a, x) by its power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a, x):
    # Q(a, x) by the Legendre continued fraction, modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _check_dof(dof):
    if not dof > 0:
        raise DomainError(f"degrees of freedom must be positive, got {dof}")


def chi2_cdf(x: float, dof) -> float:
    _check_dof(dof)
    x = float(x)
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a = 0.5 * dof
    h = 0.5 * x
    if h < a + 1.0:
        return _gamma_series(a, h)
    return 1.0 - _gamma_cfrac(a, h)


def chi2_sf(x: float, dof) -> float:
    _check_dof(dof)
    x = float(x)
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a = 0.5 * dof
    h = 0.5 * x
    if h < a + 1.0:
        return 1.0 - _gamma_series(a, h)
    return _gamma_cfrac(a, h)


def chi2_pdf(x: float, dof) -> float:
    _check_dof(dof)
    x = float(x)
    if x <= 0.0:
        if dof == 2:
            return 0.5 if x == 0.0 else 0.0
        return math.inf if (x == 0.0 and dof < 2) else 0.0
    a = 0.5 * dof
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def _invert(target, dof, upper):
    # safeguarded Newton on F(x) = target (or S(x) = target when upper)
    fn = chi2_sf if upper else chi2_cdf
    sign = -1.0 if upper else 1.0
    # Wilson-Hilferty start
    z = NormalDist().inv_cdf(1.0 - target if upper else target)
    c = 2.0 / (9.0 * dof)
    x = max(dof * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-8)
    lo, hi = 0.0, math.inf
    for _ in range(300):
        f = fn(x, dof) - target
        if sign * f > 0.0:
            hi = x
        else:
            lo = x
        if f == 0.0:
            return x
        dens = chi2_pdf(x, dof)
        step = f / (sign * dens) if dens > 0.0 else math.inf
        nxt = x - step
        if not (lo < nxt < hi) or not math.isfinite(nxt):
            nxt = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * x + 1.0
        if abs(nxt - x) <= 4e-16 * max(x, 1e-300):
            return nxt
        if math.isfinite(hi) and hi - lo <= 4e-16 * hi:
            return 0.5 * (lo + hi)
        x = nxt
    return x


@lru_cache(maxsize=1024)
def chi2_quantile(prob: float, dof) -> float:
    """``x`` with ``chi2_cdf(x, dof) == prob``.

    Upper-tail probabilities (``prob > 0.5``) are inverted through the
    survival function, which keeps relative accuracy near ``prob = 1``.
    """
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must lie in (0,1), got {prob}")
    _check_dof(dof)
    prob = float(prob)
    if prob > 0.5:
        return _invert(1.0 - prob, dof, upper=True)
    return _invert(prob, dof, upper=False)


@lru_cache(maxsize=1024)
def chi2_isf(tail: float, dof) -> float:
    """``x`` with ``chi2_sf(x, dof) == tail``."""
    if not 0.0 < tail < 1.0:
        raise DomainError(f"tail must lie in (0,1), got {tail}")
    _check_dof(dof)
    tail = float(tail)
    if tail < 0.5:
        return _invert(tail, dof, upper=True)
    return _invert(1.0 - tail, dof, upper=False)


def normal_quantile(prob: float) -> float:
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must lie in (0,1), got {prob}")
    return NormalDist().inv_cdf(prob)


def sample_mvn(chol, count: int, stream: SeededStream, start: int = 0) -> np.ndarray:
    """``count`` i.i.d. rows from ``N(0, chol @ chol.T)``.

    ``chol`` may be any square factor, e.g. from :func:`psd_factor`.

    Row ``r`` uses standard normals ``(start + r) * dim .. (start + r + 1) * dim - 1``
    of ``stream``, so disjoint row ranges can be generated independently.
    """
    L = np.asarray(chol, dtype=np.float64)
    dim = L.shape[0]
    if count < 0:
        raise DomainError("count must be nonnegative")
    if count == 0 or dim == 0:
        return np.zeros((count, dim))
    xi = stream.normals(count * dim, start=start * dim).reshape(count, dim)
    return xi @ L.T
