"""Estimators for the experiment families.

Every estimator returns an :class:`EstimateBundle`: the estimate of
interest with per-observation influence values, plus one or more
:class:`MomentBlock` s holding the specification-test moments with their
own (estimation-effect corrected) influence values. Influence columns are
centred, so their sample means vanish up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .dgp import DgpParams, Sample, generate, true_beta
from .errors import (DegenerateRegressor, EmptyArm, NotPositiveSemiDefinite, RankDeficient,
                     WeakFirstStage)
from .gaussian_core import SeededStream, solve_psd

__all__ = [
    "MomentBlock",
    "EstimateBundle",
    "estimate",
    "estimate_did",
    "estimate_iv",
    "estimate_gmm",
    "estimate_linear_constant",
    "estimate_gaussian_direct",
    "iv_interval_grid",
    "default_d_grid",
]

KS_WEIGHT_BOUNDS = (0.1, 10.0)


@dataclass
class MomentBlock:
    """Specification-test moments ``theta_hat`` with influence rows.

    ``influence`` is ``None`` in known-variance mode, where ``theta_hat`` is
    already standardized. ``weights`` is the KS weight vector, the CvM
    measure or the J-test weight matrix, depending on ``default_kind``.
    """

    name: str
    theta_hat: np.ndarray
    influence: np.ndarray | None
    default_kind: str
    weights: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.theta_hat.size

    def covariance(self) -> np.ndarray:
        if self.influence is None:
            return np.eye(self.size)
        h = self.influence
        cov = h.T @ h / h.shape[0]
        return 0.5 * (cov + cov.T)


@dataclass
class EstimateBundle:
    family: str
    n: int
    beta_hat: np.ndarray
    V_hat: np.ndarray
    beta_influence: np.ndarray | None
    blocks: list = field(default_factory=list)
    rate: str = "sqrt_n"

    @property
    def p(self) -> int:
        return self.beta_hat.size

    @property
    def theta_hat(self) -> np.ndarray:
        if not self.blocks:
            return np.empty(0)
        return np.concatenate([b.theta_hat for b in self.blocks])

    @property
    def Sigma_theta_hat(self) -> np.ndarray:
        h = self.theta_influence
        if h is None:
            return np.eye(self.theta_hat.size)
        cov = h.T @ h / h.shape[0]
        return 0.5 * (cov + cov.T)

    @property
    def theta_influence(self):
        if not self.blocks or any(b.influence is None for b in self.blocks):
            return None
        return np.hstack([b.influence for b in self.blocks])

    @property
    def influence_values(self):
        """``n x (p + q)`` matrix of beta and moment influence values."""
        if self.beta_influence is None:
            return None
        parts = [self.beta_influence]
        h = self.theta_influence
        if h is not None:
            parts.append(h)
        return np.hstack(parts)

    def block(self, name: str) -> MomentBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(f"no moment block {name!r} (have {[b.name for b in self.blocks]})")


def _two_group(values, group, share):
    """Difference in group means and its exact influence rows."""
    g = group[:, None] if values.ndim == 2 else group
    treated = group == 1.0
    m1 = values[treated].mean(axis=0)
    m0 = values[~treated].mean(axis=0)
    infl = g * (values - m1) / share - (1.0 - g) * (values - m0) / (1.0 - share)
    return m1 - m0, infl


def _arms(group, minimum, exc):
    n1 = int(np.sum(group == 1.0))
    n0 = group.size - n1
    if n1 < minimum or n0 < minimum:
        raise exc(f"arm sizes {n1} and {n0}; need at least {minimum} each")
    return n1 / group.size


def estimate_did(sample: Sample) -> EstimateBundle:
    """Post-period DID and the placebo DIDs of every pre-period.

    All contrasts are taken against the base period.
    """
    g = np.asarray(sample["treated"], dtype=np.float64)
    share = _arms(g, 1, EmptyArm)
    base = sample["y_base"]
    d_post = sample["y_post"] - base
    n_pre = sum(1 for k in sample.columns if k.startswith("y_pre"))
    d_pre = np.column_stack([sample[f"y_pre{k}"] - base for k in range(1, n_pre + 1)])
    beta, psi = _two_group(d_post, g, share)
    theta, h = _two_group(d_pre, g, share)
    psi = psi[:, None]
    return EstimateBundle(
        family="DID",
        n=sample.n,
        beta_hat=np.array([beta]),
        V_hat=psi.T @ psi / sample.n,
        beta_influence=psi,
        blocks=[MomentBlock("pretrends", theta, h, "F")],
    )


def iv_interval_grid(points: int, lo: float = -2.0, hi: float = 2.0):
    """Intervals ``(a, b]`` between consecutive-or-not grid endpoints.

    Endpoints are ``-inf``, ``points`` equispaced values on ``[lo, hi]`` and
    ``+inf``; the whole line is excluded. Weights are the inverse standard
    deviation of a standard normal cell indicator, clipped to the KS bounds.
    """
    ends = np.concatenate([[-np.inf], np.linspace(lo, hi, points), [np.inf]])
    a_idx, b_idx = np.triu_indices(ends.size, k=1)
    keep = ~((a_idx == 0) & (b_idx == ends.size - 1))
    lower = ends[a_idx[keep]]
    upper = ends[b_idx[keep]]
    cdf = np.vectorize(NormalDist().cdf)
    mass = cdf(upper) - cdf(lower)
    weights = np.clip(1.0 / np.sqrt(mass * (1.0 - mass)), *KS_WEIGHT_BOUNDS)
    return lower, upper, weights


def estimate_iv(sample: Sample, interval_points: int = 9) -> EstimateBundle:
    """Wald estimator with covariate balance and interval balance moments."""
    z = np.asarray(sample["z"], dtype=np.float64)
    share = _arms(z, 1, EmptyArm)
    n = sample.n
    dy, infl_y = _two_group(sample["y"], z, share)
    dd, infl_d = _two_group(sample["d"], z, share)
    if abs(dd) < 1e-6:
        raise WeakFirstStage(f"first stage {dd:.3e} is below 1e-6")
    beta = dy / dd
    psi = ((infl_y - beta * infl_d) / dd)[:, None]
    covs = sorted((k for k in sample.columns if k.startswith("x")), key=lambda k: int(k[1:]))
    xmat = np.column_stack([sample[k] for k in covs])
    bal, bal_h = _two_group(xmat, z, share)
    lower, upper, weights = iv_interval_grid(interval_points)
    x1 = sample[covs[0]]
    ind = ((x1[:, None] > lower) & (x1[:, None] <= upper)).astype(np.float64)
    cells, cells_h = _two_group(ind, z, share)
    return EstimateBundle(
        family="IV",
        n=n,
        beta_hat=np.array([beta]),
        V_hat=psi.T @ psi / n,
        beta_influence=psi,
        blocks=[
            MomentBlock("balance", bal, bal_h, "F"),
            MomentBlock("intervals", cells, cells_h, "weightedKS", weights),
        ],
    )


def gmm_arrays(sample: Sample):
    """Regressor matrix ``[1, x]``, instrument matrix ``[1, z...]`` and ``y``."""
    m = sum(1 for k in sample.columns if k.startswith("z"))
    n = sample.n
    X = np.column_stack([np.ones(n), sample["x"]])
    Z = np.column_stack([np.ones(n)] + [sample[f"z{k}"] for k in range(1, m + 1)])
    return X, Z, np.asarray(sample["y"], dtype=np.float64)


def estimate_gmm(sample: Sample, weight=None) -> EstimateBundle:
    """One-step linear GMM with a fixed weight matrix.

    Moments are ``g(U, b) = Z (y - X'b)``. ``weight=None`` uses the 2SLS
    weight ``(Z'Z/n)^{-1}``. The ``overid`` block holds ``gbar(beta_hat)``
    with influence rows ``M (g_i - gbar)``, where
    ``M = I - G (G'WG)^{-1} G'W`` removes the estimation effect.
    """
    X, Z, y = gmm_arrays(sample)
    n, p = X.shape
    q = Z.shape[1]
    if q < p:
        raise RankDeficient(f"{q} moments cannot identify {p} parameters")
    Szx = Z.T @ X / n
    Szy = Z.T @ y / n
    if weight is None:
        szz = Z.T @ Z / n
        W = solve_psd(0.5 * (szz + szz.T), np.eye(q), error=RankDeficient)
    else:
        W = np.asarray(weight, dtype=np.float64)
        if W.shape != (q, q):
            raise RankDeficient(f"weight must be {q}x{q}")
    W = 0.5 * (W + W.T)
    if np.linalg.matrix_rank(Szx) < p:
        raise RankDeficient("Z'X does not have full column rank")
    hess = Szx.T @ W @ Szx
    try:
        beta = solve_psd(0.5 * (hess + hess.T), Szx.T @ W @ Szy, error=RankDeficient)
        # A = (G'WG)^{-1} G'W with G = -Szx
        A = -solve_psd(0.5 * (hess + hess.T), Szx.T @ W, error=RankDeficient)
    except NotPositiveSemiDefinite as exc:
        raise RankDeficient(str(exc)) from exc
    resid = y - X @ beta
    g = Z * resid[:, None]
    gbar = g.mean(axis=0)
    psi = -(g @ A.T)
    M = np.eye(q) + Szx @ A
    h = (g - gbar) @ M.T
    return EstimateBundle(
        family="GMM",
        n=n,
        beta_hat=beta,
        V_hat=psi.T @ psi / n,
        beta_influence=psi,
        blocks=[MomentBlock("overid", gbar, h, "bootstrapJ", W)],
    )


def j_statistic(bundle: EstimateBundle) -> float:
    blk = bundle.block("overid")
    return float(bundle.n * blk.theta_hat @ blk.weights @ blk.theta_hat)


def default_d_grid(size: int = 101) -> np.ndarray:
    return np.linspace(0.0, 2.0, size)


def estimate_linear_constant(sample: Sample, d_grid=None) -> EstimateBundle:
    """OLS slope and the residual process ``theta(d) = P_n[1{D <= d} e_hat]``.

    Influence rows of ``theta(d)`` include the effect of estimating the
    intercept and slope.
    """
    d = np.asarray(sample["d"], dtype=np.float64)
    y = np.asarray(sample["y"], dtype=np.float64)
    grid = default_d_grid() if d_grid is None else np.asarray(d_grid, dtype=np.float64)
    n = d.size
    dbar = d.mean()
    dc = d - dbar
    var_d = float(dc @ dc) / n
    if not var_d > 1e-12 * max(1.0, dbar * dbar):
        raise DegenerateRegressor("treatment has no variation")
    beta = float(dc @ (y - y.mean())) / (n * var_d)
    alpha = y.mean() - beta * dbar
    resid = y - alpha - beta * d
    psi = (dc * resid / var_d)[:, None]
    ind = (d[:, None] <= grid[None, :]).astype(np.float64)
    theta = resid @ ind / n
    cdf = ind.mean(axis=0)
    partial = (ind * d[:, None]).mean(axis=0)
    phi = resid[:, None] * (ind - cdf + np.outer(dc, cdf * dbar - partial) / var_d)
    h = phi - theta
    measure = np.full(grid.size, 1.0 / grid.size)
    return EstimateBundle(
        family="LinearConstant",
        n=n,
        beta_hat=np.array([beta]),
        V_hat=psi.T @ psi / n,
        beta_influence=psi,
        blocks=[MomentBlock("linearity", theta, h, "CvM", measure)],
    )


def estimate_gaussian_direct(params: DgpParams, stream: SeededStream, mode: str = "theorem2",
                             n: int = 1) -> EstimateBundle:
    """One draw of the standardized (beta, theta) deviations, known variance.

    In ``theorem2`` mode the estimate deviates from ``beta0`` by ``Z`` and
    ``Sigma_beta = I``. In ``theorem1`` mode the deviation is ``Z / sqrt(n)``
    with ``V = I``, i.e. a root-n estimator whose limit is the same draw.
    """
    if params.family != "GaussianDirect":
        raise ValueError("estimate_gaussian_direct needs GaussianDirect params")
    row = generate(params, 1, stream)
    z = np.array([row[f"beta{k + 1}"][0] for k in range(params.p)])
    t = np.array([row[f"theta{k + 1}"][0] for k in range(params.q)])
    if mode == "theorem1":
        scale = 1.0 / math.sqrt(n)
        rate = "sqrt_n"
    elif mode == "theorem2":
        scale = 1.0
        rate = "generic"
        n = 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EstimateBundle(
        family="GaussianDirect",
        n=n,
        beta_hat=true_beta(params) + scale * z,
        V_hat=np.eye(params.p),
        beta_influence=None,
        blocks=[MomentBlock("theta", scale * t, None, "F")],
        rate=rate,
    )


def estimate(params: DgpParams, sample: Sample) -> EstimateBundle:
    """Dispatch to the family's estimator with the family's defaults."""
    fam = params.family
    if fam == "DID":
        return estimate_did(sample)
    if fam == "IV":
        return estimate_iv(sample, params.interval_points)
    if fam == "GMM":
        return estimate_gmm(sample, None if params.gmm_weight == "2sls" else np.eye(params.n_instruments + 1))
    if fam == "LinearConstant":
        return estimate_linear_constant(sample, default_d_grid(params.grid_size))
    raise ValueError("GaussianDirect bundles come from estimate_gaussian_direct")
