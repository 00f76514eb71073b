"""Specification-test statistics and their critical values.

All statistics here are even, convex, nonnegative functionals vanishing at
zero: the quadratic F form, the weighted sup (Kolmogorov-Smirnov) norm and
the weighted squared (Cramer-von Mises) norm over a finite grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BadMeasure, DegenerateCriticalValue, DomainError, EmptyGrid, EmptyList, SingularSecondMoment
from .gaussian_core import SeededStream, psd_factor, sample_mvn, solve_psd

__all__ = [
    "KINDS",
    "EmpiricalProcessGrid",
    "SpecTestResult",
    "f_statistic",
    "weighted_ks",
    "cvm_statistic",
    "quadratic_statistic",
    "statistic_rows",
    "simulate_critical_value",
    "multiplier_bootstrap_critical_value",
    "order_statistic_quantile",
    "combined_statistic",
]

KINDS = ("F", "weightedKS", "CvM", "bootstrapJ")

# rows per batch when simulating; fixed so results never depend on it
_CHUNK = 8192


@dataclass(frozen=True)
class EmpiricalProcessGrid:
    """Evaluations of an empirical process on a finite grid of functions.

    ``values`` holds ``P_n f_k`` (or its sqrt(n)-scaled version) and
    ``weights`` the KS weight function or the CvM mixing measure.
    """

    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64).ravel())
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64).ravel())
            if self.weights.shape != self.values.shape:
                raise DomainError("weights and values must have the same length")

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SpecTestResult:
    statistic: float
    critical_value: float
    kind: str
    passed: bool = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown test kind {self.kind!r}")
        if not self.statistic >= 0.0:
            raise DomainError(f"statistic must be nonnegative, got {self.statistic}")
        # ties pass: the rejection region is {T > q}
        object.__setattr__(self, "passed", bool(self.statistic <= self.critical_value))


def f_statistic(moment_values) -> float:
    """``n * fbar' (F'F / n)^{-1} fbar`` for an ``n x K`` matrix of moment values."""
    f = np.asarray(moment_values, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    n, k = f.shape
    if n <= k:
        raise DomainError(f"need more observations than moments (n={n}, K={k})")
    fbar = f.mean(axis=0)
    second = f.T @ f / n
    second = 0.5 * (second + second.T)
    x = solve_psd(second, fbar, error=SingularSecondMoment)
    return max(float(n * fbar @ x), 0.0)


def _check_ks_weights(grid):
    if grid.size == 0:
        raise EmptyGrid("grid has no points")
    if grid.weights is None:
        raise DomainError("weighted KS needs weights")
    w = grid.weights
    if not (np.all(np.isfinite(w)) and np.all(w > 0.0)):
        raise DomainError("KS weights must be positive and finite")


def _check_measure(grid):
    if grid.size == 0:
        raise EmptyGrid("grid has no points")
    if grid.weights is None:
        raise BadMeasure("CvM statistic needs a mixing measure")
    w = grid.weights
    if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-12:
        raise BadMeasure(f"measure weights must be nonnegative and sum to 1 (sum={w.sum():.15g})")


def weighted_ks(grid: EmpiricalProcessGrid) -> float:
    """``max_k w_k |v_k|``."""
    _check_ks_weights(grid)
    return float(np.max(grid.weights * np.abs(grid.values)))


def cvm_statistic(grid: EmpiricalProcessGrid) -> float:
    """``sum_k mu_k v_k^2``."""
    _check_measure(grid)
    return float(np.sum(grid.weights * grid.values * grid.values))


def quadratic_statistic(values, matrix) -> float:
    """``v' A v`` for PSD ``A``; the F and J forms given their weight matrix."""
    v = np.asarray(values, dtype=np.float64).ravel()
    return max(float(v @ np.asarray(matrix, dtype=np.float64) @ v), 0.0)


def statistic_rows(kind: str, draws, weights) -> np.ndarray:
    """Apply the statistic of ``kind`` to each row of ``draws``.

    ``weights`` is a weight vector for ``weightedKS``/``CvM`` and a weight
    matrix for ``F``/``bootstrapJ``.
    """
    if kind == "weightedKS":
        return kernels.weighted_sup_abs(draws, weights)
    if kind == "CvM":
        return kernels.weighted_sum_sq(draws, weights)
    if kind in ("F", "bootstrapJ"):
        return kernels.quad_form_rows(draws, weights)
    raise DomainError(f"unknown test kind {kind!r}")


def _resolve_weights(kind, grid_weights, covariance):
    dim = covariance.shape[0]
    if kind == "F":
        if grid_weights is None:
            # pivotal form: inverse of the process covariance
            return solve_psd(covariance, np.eye(dim), error=SingularSecondMoment)
        return np.asarray(grid_weights, dtype=np.float64)
    if kind == "bootstrapJ":
        if grid_weights is None:
            raise DomainError("bootstrapJ needs the GMM weight matrix")
        return np.asarray(grid_weights, dtype=np.float64)
    if grid_weights is None:
        raise DomainError(f"{kind} needs grid weights")
    w = np.asarray(grid_weights, dtype=np.float64).ravel()
    if w.size != dim:
        raise DomainError("grid weights do not match the covariance dimension")
    if kind == "weightedKS":
        _check_ks_weights(EmpiricalProcessGrid(np.zeros(dim), w))
    elif kind == "CvM":
        _check_measure(EmpiricalProcessGrid(np.zeros(dim), w))
    else:
        raise DomainError(f"unknown test kind {kind!r}")
    return w


def order_statistic_quantile(values, alpha: float) -> float:
    """The ``ceil((1 - alpha) * B)``-th smallest of ``B`` values."""
    values = np.asarray(values, dtype=np.float64)
    b = values.size
    k = math.ceil(round((1.0 - alpha) * b, 9))
    k = min(max(k, 1), b)
    return float(np.partition(values, k - 1)[k - 1])


def _check_sim_args(alpha, draws):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")
    if draws < 1000:
        raise DomainError(f"need at least 1000 draws, got {draws}")


def simulate_critical_value(kind: str, process_covariance, grid_weights, alpha: float,
                            draws: int, stream: SeededStream) -> float:
    """(1 - alpha) quantile of the statistic's Gaussian limit.

    Draws ``Z_b ~ N(0, process_covariance)``, evaluates the statistic on
    each and returns the conservative order statistic. Draw ``b`` always uses
    the same normals of ``stream`` regardless of batching.
    """
    _check_sim_args(alpha, draws)
    cov = np.asarray(process_covariance, dtype=np.float64)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    cov = 0.5 * (cov + cov.T)
    L = psd_factor(cov)
    weights = _resolve_weights(kind, grid_weights, cov)
    stats = np.empty(draws)
    for start in range(0, draws, _CHUNK):
        m = min(_CHUNK, draws - start)
        z = sample_mvn(L, m, stream, start=start)
        stats[start:start + m] = statistic_rows(kind, z, weights)
    q = order_statistic_quantile(stats, alpha)
    if not q > 0.0:
        raise DegenerateCriticalValue("simulated critical value is not positive")
    return q


def multiplier_bootstrap_critical_value(kind: str, influence_values, grid_weights, alpha: float,
                                        draws: int, stream: SeededStream) -> float:
    """Gaussian multiplier bootstrap version of :func:`simulate_critical_value`.

    Each draw is ``n^{-1/2} sum_i xi_i h_i`` with i.i.d. standard normal
    multipliers on the centred influence contributions ``h_i``.
    """
    _check_sim_args(alpha, draws)
    h = np.asarray(influence_values, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    n = h.shape[0]
    h = h - h.mean(axis=0)
    cov = h.T @ h / n
    weights = _resolve_weights(kind, grid_weights, 0.5 * (cov + cov.T))
    stats = np.empty(draws)
    chunk = max(1, min(_CHUNK, 2_000_000 // max(n, 1)))
    scale = 1.0 / math.sqrt(n)
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        xi = stream.normals(m * n, start=start * n).reshape(m, n)
        stats[start:start + m] = statistic_rows(kind, (xi @ h) * scale, weights)
    q = order_statistic_quantile(stats, alpha)
    if not q > 0.0:
        raise DegenerateCriticalValue("bootstrap critical value is not positive")
    return q


def combined_statistic(results) -> float:
    """``max_j (T_j - q_j)``; every test passes iff the result is <= 0."""
    results = list(results)
    if not results:
        raise EmptyList("need at least one test result")
    return max(r.statistic - r.critical_value for r in results)
