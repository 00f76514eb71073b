"""Monte Carlo check of the Gaussian correlation inequality.

For a centred Gaussian measure ``mu`` and convex sets ``E``, ``F`` symmetric
about the origin, ``mu(E & F) >= mu(E) mu(F)``. :func:`check_gci` estimates
all three probabilities from one set of draws and reports the margin
``p_joint - p_E p_F`` with a delta-method standard error.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .gaussian_core import SeededStream, cholesky, normal_quantile, sample_mvn

__all__ = [
    "Ellipsoid",
    "Slab",
    "SymmetricPolytope",
    "membership",
    "GciReport",
    "check_gci",
    "random_sweep",
    "random_correlation",
    "MIN_DRAWS",
]

MIN_DRAWS = 10_000
_BATCH = 65_536


def _points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim or x.ndim > 2:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


class _SetBase:
    kind = ""

    def contains(self, x):
        """Indicator for one point (bool) or each row of a matrix (bool array)."""
        x = _points(x, self.dim)
        out = self._contains(np.atleast_2d(x))
        return bool(out[0]) if x.ndim == 1 else out


@dataclass(frozen=True, eq=False)
class Ellipsoid(_SetBase):
    """``{x : x' A x <= c}`` for PSD ``A`` and ``c > 0``."""

    A: np.ndarray
    c: float
    kind = "ellipsoid"

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError("ellipsoid matrix must be square")
        cholesky(a)  # PSD check
        if not self.c > 0:
            raise DomainError("ellipsoid level must be positive")
        object.__setattr__(self, "A", 0.5 * (a + a.T))

    @property
    def dim(self):
        return self.A.shape[0]

    def _contains(self, x):
        return np.einsum("ij,jk,ik->i", x, self.A, x) <= self.c


@dataclass(frozen=True, eq=False)
class Slab(_SetBase):
    """``{x : |a' x| <= c}``."""

    a: np.ndarray
    c: float
    kind = "slab"

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64).ravel())
        if not self.c > 0:
            raise DomainError("slab half-width must be positive")

    @property
    def dim(self):
        return self.a.size

    def _contains(self, x):
        return np.abs(x @ self.a) <= self.c


@dataclass(frozen=True, eq=False)
class SymmetricPolytope(_SetBase):
    """``{x : |a_k' x| <= c_k for every k}``, an intersection of slabs."""

    rows: np.ndarray
    bounds: np.ndarray
    kind = "polytope"

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        bounds = np.asarray(self.bounds, dtype=np.float64).ravel()
        if bounds.size != rows.shape[0]:
            raise DimensionMismatch("need one bound per row")
        if not np.all(bounds > 0):
            raise DomainError("polytope bounds must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self):
        return self.rows.shape[1]

    def _contains(self, x):
        return np.all(np.abs(x @ self.rows.T) <= self.bounds, axis=1)


def membership(region, x):
    """Whether ``x`` (a point, or each row of a matrix) lies in ``region``."""
    return region.contains(x)


@dataclass(frozen=True)
class GciReport:
    n11: int
    n10: int
    n01: int
    n00: int
    dim: int = 0
    case: int = -1
    kinds: str = ""

    @property
    def draws(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    @property
    def p_joint(self) -> float:
        return self.n11 / self.draws

    @property
    def p_E(self) -> float:
        return (self.n11 + self.n10) / self.draws

    @property
    def p_F(self) -> float:
        return (self.n11 + self.n01) / self.draws

    @property
    def margin(self) -> float:
        return self.p_joint - self.p_E * self.p_F

    @property
    def se_margin(self) -> float:
        # delta method on the multinomial of the four cells (n11, n10, n01, n00)
        n = self.draws
        pi = np.array([self.n11, self.n10, self.n01, self.n00]) / n
        grad = np.array([1.0 - self.p_E - self.p_F, -self.p_F, -self.p_E, 0.0])
        g_pi = grad @ pi
        var = (grad * grad) @ pi - g_pi * g_pi
        return math.sqrt(max(var, 0.0) / n)


def check_gci(sigma, E, F, draws: int, stream: SeededStream, case: int = -1) -> GciReport:
    """Estimate ``mu(E & F)``, ``mu(E)`` and ``mu(F)`` under ``N(0, sigma)``.

    Batch ``b`` of draws comes from ``stream.child(b)``.
    """
    if draws < MIN_DRAWS:
        raise DomainError(f"need at least {MIN_DRAWS} draws, got {draws}")
    L = cholesky(sigma)
    dim = L.shape[0]
    if E.dim != dim or F.dim != dim:
        raise DimensionMismatch("set dimensions do not match the covariance")
    n11 = n10 = n01 = 0
    for b, start in enumerate(range(0, draws, _BATCH)):
        m = min(_BATCH, draws - start)
        z = sample_mvn(L, m, stream.child(b))
        in_e = E._contains(z)
        in_f = F._contains(z)
        n11 += int(np.count_nonzero(in_e & in_f))
        n10 += int(np.count_nonzero(in_e & ~in_f))
        n01 += int(np.count_nonzero(~in_e & in_f))
    return GciReport(n11, n10, n01, draws - n11 - n10 - n01, dim, case, f"{E.kind}/{F.kind}")


def random_correlation(dim: int, stream: SeededStream) -> np.ndarray:
    """Random correlation matrix: random rotation of a random positive spectrum."""
    g = stream.child(0).normals(dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(g)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    spectrum = np.exp(4.0 * stream.child(1).uniforms(dim) - 2.0)
    cov = (q * spectrum) @ q.T
    s = 1.0 / np.sqrt(np.diag(cov))
    cov = cov * s[:, None] * s[None, :]
    np.fill_diagonal(cov, 1.0)
    return 0.5 * (cov + cov.T)


def _random_set(sigma, stream: SeededStream):
    dim = sigma.shape[0]
    u = stream.child(0).uniforms(4)
    # target marginal probability in [0.3, 0.85]
    target = 0.3 + 0.55 * u[1]
    kind = int(u[0] * 3)
    if kind == 0:
        a = stream.child(1).normals(dim)
        sd = math.sqrt(float(a @ sigma @ a))
        return Slab(a, sd * normal_quantile(0.5 + 0.5 * target))
    if kind == 1:
        k = 1 + int(u[2] * 4)
        rows = stream.child(1).normals(k * dim).reshape(k, dim)
        sd = np.sqrt(np.einsum("ij,jk,ik->i", rows, sigma, rows))
        each = target ** (1.0 / k)
        return SymmetricPolytope(rows, sd * normal_quantile(0.5 + 0.5 * each))
    rank = 1 + int(u[2] * dim)
    b = stream.child(1).normals(dim * rank).reshape(dim, rank)
    A = b @ b.T
    # E[x'Ax] = tr(A sigma); the level is a random multiple of it
    return Ellipsoid(A, float(np.trace(A @ sigma)) * (0.4 + 1.2 * u[3]))


def _sweep_case(args):
    dim_max, draws, master_seed, case = args
    base = SeededStream(master_seed, case)
    dim = 1 + min(int(base.child(0).uniforms(1)[0] * dim_max), dim_max - 1)
    sigma = random_correlation(dim, base.child(1))
    E = _random_set(sigma, base.child(2))
    F = _random_set(sigma, base.child(3))
    return check_gci(sigma, E, F, draws, base.child(4), case=case)


def random_sweep(dim_max: int, cases: int, draws: int = 100_000, master_seed: int = 0,
                 workers: int = 1) -> list:
    """Check the inequality on ``cases`` random (covariance, E, F) triples.

    Case ``c`` depends only on ``(master_seed, c)``; every report is kept.
    """
    if not 1 <= dim_max <= 10:
        raise DomainError("dim_max must lie in 1..10")
    if cases < 0:
        raise DomainError("cases must be nonnegative")
    tasks = [(dim_max, draws, master_seed, c) for c in range(cases)]
    if workers > 1 and cases > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_case, tasks, chunksize=max(1, cases // (workers * 4))))
    else:
        reports = [_sweep_case(t) for t in tasks]
    for r in reports:
        if r.p_E * r.p_F < 1e-3:
            warnings.warn(f"case {r.case}: p_E * p_F = {r.p_E * r.p_F:.2e} is small; "
                          "margin has large relative error", RuntimeWarning, stacklevel=2)
    return reports
