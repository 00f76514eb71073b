"""Data-generating processes for the five experiment families.

Each family has a ``rho`` knob that steers the dependence between the
estimator of interest and the specification-test moments:

``DID``
    Panel of units observed in ``n_pre`` pre-periods, a base period and a
    post period. ``rho`` is the correlation between the post-period shock
    and the first pre-period shock.
``IV``
    Binary instrument, binary treatment with always-takers, never-takers
    and compliers. ``rho`` is the correlation between the outcome noise and
    the first balancing covariate.
``GMM``
    Linear IV model with one endogenous regressor, an intercept and
    ``n_instruments`` excluded instruments; heteroskedastic errors.
    ``rho`` is the endogeneity correlation between structural and
    first-stage errors.
``LinearConstant``
    ``Y = alpha0 + beta0 D + eps`` with ``D ~ U(0, 2)``. ``rho`` sets the
    heteroskedasticity ``sd(eps | D) = exp(rho (D - 1))``.
``GaussianDirect``
    Draws of ``(Z, Z')`` from ``N(0, [[I_p, S12], [S12', I_q]])``; by
    default ``S12 = rho * [I, 0]``.

With ``null_mode=True`` every identifying condition holds exactly and
``violation`` is ignored. Otherwise ``violation`` sets the size of a
departure that the specification tests are designed to detect.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams
from .gaussian_core import SeededStream, cholesky, sample_mvn

__all__ = ["FAMILIES", "DgpParams", "Sample", "generate", "true_beta", "gaussian_direct_covariance",
           "iv_population_moments"]

FAMILIES = ("DID", "IV", "GMM", "LinearConstant", "GaussianDirect")

# IV compliance table: (share, baseline mean of Y(0), effect Y(1) - Y(0))
IV_TYPES = {
    "always": (0.2, 1.0, 2.0),
    "never": (0.2, -0.5, 0.5),
    "complier": (0.6, 0.0, 1.0),
}

MIN_N = {"DID": 4, "IV": 4, "GMM": 8, "LinearConstant": 3, "GaussianDirect": 1}


@dataclass(frozen=True)
class DgpParams:
    family: str
    rho: float = 0.0
    null_mode: bool = True
    violation: float = 0.0
    # DID
    n_pre: int = 2
    effect: float = 1.0
    treated_share: float = 0.5
    # IV
    n_covariates: int = 1
    interval_points: int = 9
    # GMM
    n_instruments: int = 3
    gmm_weight: str = "identity"
    # LinearConstant
    alpha0: float = 2.0
    beta0: float = 3.0
    grid_size: int = 101
    # GaussianDirect
    p: int = 1
    q: int = 2
    sigma12: tuple | None = field(default=None)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BadParams(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if not -1.0 < self.rho < 1.0:
            raise BadParams(f"rho must lie in (-1,1), got {self.rho}")
        if self.n_pre < 1:
            raise BadParams("n_pre must be at least 1")
        if not 0.0 < self.treated_share < 1.0:
            raise BadParams("treated_share must lie in (0,1)")
        if self.n_covariates < 1 or self.interval_points < 2:
            raise BadParams("IV needs at least one covariate and two interval points")
        if self.n_instruments < 1:
            raise BadParams("GMM needs at least one excluded instrument")
        if self.gmm_weight not in ("identity", "2sls"):
            raise BadParams("gmm_weight must be 'identity' or '2sls'")
        if self.grid_size < 2:
            raise BadParams("grid_size must be at least 2")
        if self.p < 1 or self.q < 1:
            raise BadParams("p and q must be positive")
        if self.sigma12 is not None:
            s12 = np.asarray(self.sigma12, dtype=np.float64)
            if s12.shape != (self.p, self.q):
                raise BadParams(f"sigma12 must be {self.p}x{self.q}, got shape {s12.shape}")
            object.__setattr__(self, "sigma12", tuple(map(tuple, s12.tolist())))

    @property
    def effective_violation(self) -> float:
        return 0.0 if self.null_mode else float(self.violation)


@dataclass
class Sample:
    family: str
    n: int
    columns: dict

    def __getitem__(self, key):
        return self.columns[key]

    def take(self, index) -> "Sample":
        """Rows ``index`` in the given order (used for permutation checks)."""
        index = np.asarray(index)
        return Sample(self.family, index.size, {k: v[index] for k, v in self.columns.items()})


def true_beta(params: DgpParams) -> np.ndarray:
    """The estimand under the null for each family."""
    fam = params.family
    if fam == "DID":
        return np.array([params.effect])
    if fam == "IV":
        return np.array([IV_TYPES["complier"][2]])
    if fam == "GMM":
        return np.array([1.0, -0.5])
    if fam == "LinearConstant":
        return np.array([params.beta0])
    return np.full(params.p, 0.5)


def gaussian_direct_covariance(params: DgpParams) -> np.ndarray:
    """Joint covariance of the standardized (beta, theta) deviations.

    The off-diagonal block is used with its transpose below the diagonal.
    """
    p, q = params.p, params.q
    if params.sigma12 is None:
        s12 = np.zeros((p, q))
        k = min(p, q)
        s12[np.arange(k), np.arange(k)] = params.rho
    else:
        s12 = np.asarray(params.sigma12, dtype=np.float64)
    cov = np.eye(p + q)
    cov[:p, p:] = s12
    cov[p:, :p] = s12.T
    return cov


def iv_population_moments() -> dict:
    """Population Wald ingredients implied by the compliance table."""
    s_a, m_a, t_a = IV_TYPES["always"]
    s_n, m_n, t_n = IV_TYPES["never"]
    s_c, m_c, t_c = IV_TYPES["complier"]
    ey1 = s_a * (m_a + t_a) + s_n * m_n + s_c * (m_c + t_c)
    ey0 = s_a * (m_a + t_a) + s_n * m_n + s_c * m_c
    ed1 = s_a + s_c
    ed0 = s_a
    return {"EY|Z=1": ey1, "EY|Z=0": ey0, "ED|Z=1": ed1, "ED|Z=0": ed0,
            "wald": (ey1 - ey0) / (ed1 - ed0)}


def generate(params: DgpParams, n: int, stream: SeededStream) -> Sample:
    """Draw an i.i.d. sample of ``n`` rows; fully determined by the stream."""
    if n < MIN_N[params.family]:
        raise BadParams(f"{params.family} needs n >= {MIN_N[params.family]}, got {n}")
    return _GENERATORS[params.family](params, n, stream)


def _bernoulli(stream, n, share):
    return (stream.uniforms(n) < share).astype(np.float64)


def _gen_did(params, n, stream):
    g = _bernoulli(stream.child(0), n, params.treated_share)
    unit = stream.child(1).normals(n) + 0.5 * g
    shocks = stream.child(2).normals(n * (params.n_pre + 2)).reshape(n, params.n_pre + 2)
    # columns: post, base, pre1, pre2, ...; post is correlated with pre1
    eps_post = params.rho * shocks[:, 2] + math.sqrt(1.0 - params.rho ** 2) * shocks[:, 0]
    scale = 1.0 + 0.5 * g
    viol = params.effective_violation

    def outcome(t, eps):
        # common trend 0.3 per period; a violation tilts the treated trend
        return unit + 0.3 * t + viol * g * t + scale * eps

    cols = {
        "treated": g,
        "y_base": outcome(0, shocks[:, 1]),
        "y_post": outcome(1, eps_post) + params.effect * g,
    }
    for k in range(1, params.n_pre + 1):
        cols[f"y_pre{k}"] = outcome(-k, shocks[:, k + 1])
    return Sample("DID", n, cols)


def _gen_iv(params, n, stream):
    z = _bernoulli(stream.child(0), n, 0.5)
    u = stream.child(1).uniforms(n)
    s_a = IV_TYPES["always"][0]
    s_n = IV_TYPES["never"][0]
    always = u < s_a
    never = (u >= s_a) & (u < s_a + s_n)
    complier = ~(always | never)
    d = np.where(always, 1.0, np.where(never, 0.0, z))
    base = np.select([always, never, complier], [IV_TYPES[k][1] for k in ("always", "never", "complier")])
    gain = np.select([always, never, complier], [IV_TYPES[k][2] for k in ("always", "never", "complier")])
    eps = stream.child(2).normals(n)
    y = base + d * gain + eps
    cov = stream.child(3).normals(n * params.n_covariates).reshape(n, params.n_covariates)
    cols = {"z": z, "d": d, "y": y}
    for k in range(params.n_covariates):
        x = cov[:, k]
        if k == 0:
            x = params.rho * eps + math.sqrt(1.0 - params.rho ** 2) * x
            x = x + params.effective_violation * z
        cols[f"x{k + 1}"] = x
    return Sample("IV", n, cols)


def _gen_gmm(params, n, stream):
    m = params.n_instruments
    zs = stream.child(0).normals(n * m).reshape(n, m)
    v = stream.child(1).normals(n)
    e = stream.child(2).normals(n)
    x = 0.5 * zs.sum(axis=1) + v
    het = np.sqrt(0.5 + 0.5 * zs[:, 0] ** 2)
    u = het * (params.rho * v + math.sqrt(1.0 - params.rho ** 2) * e)
    b = true_beta(params)
    y = b[0] + b[1] * x + u + params.effective_violation * zs[:, -1]
    cols = {"y": y, "x": x}
    for k in range(m):
        cols[f"z{k + 1}"] = zs[:, k]
    return Sample("GMM", n, cols)


def _gen_linear(params, n, stream):
    d = 2.0 * stream.child(0).uniforms(n)
    eps = np.exp(params.rho * (d - 1.0)) * stream.child(1).normals(n)
    y = params.alpha0 + params.beta0 * d + eps
    y = y + params.effective_violation * ((d - 1.0) ** 2 - 1.0 / 3.0)
    return Sample("LinearConstant", n, {"d": d, "y": y})


def _gen_gaussian(params, n, stream):
    cov = gaussian_direct_covariance(params)
    L = cholesky(cov)
    draws = sample_mvn(L, n, stream)
    p = params.p
    cols = {}
    for k in range(p):
        cols[f"beta{k + 1}"] = draws[:, k]
    for k in range(params.q):
        cols[f"theta{k + 1}"] = draws[:, p + k] + params.effective_violation
    return Sample("GaussianDirect", n, cols)


_GENERATORS = {
    "DID": _gen_did,
    "IV": _gen_iv,
    "GMM": _gen_gmm,
    "LinearConstant": _gen_linear,
    "GaussianDirect": _gen_gaussian,
}
