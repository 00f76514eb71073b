"""Replication engine for conditional size and coverage.

A replication draws a sample, estimates, runs the configured specification
tests and, on every valid replication, runs the F test of ``beta = b0`` and
checks whether the confidence region covers the true ``beta0``. The
report compares rates over all valid replications with rates over those
that passed every specification test.

Replication ``r`` draws all of its randomness from
``SeededStream(master_seed, r)``: data from ``child(0)`` and the critical
value of test ``j`` from ``child(1 + j)``. Reports are therefore identical
for any worker count.
"""
from __future__ import annotations

import logging
import math
import multiprocessing
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dgp import DgpParams, generate, true_beta
from .errors import (AllReplicationsInvalid, DegenerateCriticalValue, DomainError, EstimationError,
                     SingularMatrix, SingularVariance, ValidationError)
from .estimators import EstimateBundle, estimate, estimate_gaussian_direct
from .gaussian_core import SeededStream, chi2_quantile, normal_quantile, solve_psd
from .spec_tests import (KINDS, EmpiricalProcessGrid, SpecTestResult, combined_statistic, cvm_statistic,
                         f_statistic, multiplier_bootstrap_critical_value, quadratic_statistic,
                         simulate_critical_value, weighted_ks)

__all__ = [
    "TestSpec",
    "ScenarioConfig",
    "ReplicationOutcome",
    "MCReport",
    "f_test",
    "cr_covers",
    "evaluate_test",
    "scenario_critical_values",
    "run_replication",
    "run_scenario",
    "wilson_interval",
    "default_workers",
]

log = logging.getLogger(__name__)

CRITICAL_METHODS = ("simulate", "bootstrap", "analytic")
MODES = ("theorem1", "theorem2")
DEFAULT_BLOCKS = {
    "DID": ("pretrends",),
    "IV": ("balance", "intervals"),
    "GMM": ("overid",),
    "LinearConstant": ("linearity",),
    "GaussianDirect": ("theta",),
}
# scenario-level streams live above every replication index
_SCENARIO_STREAM = 1 << 63


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class TestSpec:
    """Which moments a specification test uses and which statistic.

    Written ``block[.component][:kind]``, e.g. ``pretrends:F``,
    ``pretrends.2:F`` or ``linearity``. Missing parts take the family's
    defaults.
    """

    __test__ = False  # not a pytest class

    block: str | None = None
    component: int | None = None
    kind: str | None = None

    @classmethod
    def parse(cls, text: str) -> "TestSpec":
        text = text.strip()
        head, _, kind = text.partition(":")
        kind = kind.strip() or None
        if kind is None and head in KINDS:
            return cls(kind=head)
        name, _, comp = head.partition(".")
        component = None
        if comp:
            if not comp.isdigit() or int(comp) < 1:
                raise ValueError(f"bad component in test {text!r}")
            component = int(comp)
        if kind is not None and kind not in KINDS:
            raise ValueError(f"unknown test kind {kind!r} in {text!r}")
        return cls(block=name.strip() or None, component=component, kind=kind)

    def __str__(self):
        s = self.block or ""
        if self.component:
            s += f".{self.component}"
        if self.kind:
            s += f":{self.kind}" if s else self.kind
        return s


@dataclass(frozen=True)
class ScenarioConfig:
    dgp: DgpParams
    n: int = 2000
    alpha_inference: float = 0.05
    alpha_spec: tuple = (0.05,)
    tests: tuple = ()
    critical: str = "simulate"
    critical_draws: int = 1000
    known_draws: int = 200_000
    weights: tuple | None = None
    reps: int = 1000
    master_seed: int = 0
    b0: tuple | None = None
    mode: str = "theorem1"
    scenario_id: str = ""

    def __post_init__(self):
        tests = tuple(TestSpec.parse(t) if isinstance(t, str) else t for t in self.tests)
        if not tests:
            tests = tuple(TestSpec(block=b) for b in DEFAULT_BLOCKS[self.dgp.family])
        object.__setattr__(self, "tests", tests)
        alphas = tuple(float(a) for a in np.atleast_1d(self.alpha_spec))
        if len(alphas) == 1 and len(tests) > 1:
            alphas = alphas * len(tests)
        object.__setattr__(self, "alpha_spec", alphas)
        if self.b0 is not None:
            object.__setattr__(self, "b0", tuple(float(b) for b in np.atleast_1d(self.b0)))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        self.validate()

    def validate(self):
        if not 0.0 < self.alpha_inference < 1.0:
            raise ValidationError("alpha_inference", "alpha_inference must lie in (0,1)")
        if len(self.alpha_spec) != len(self.tests):
            raise ValidationError("alpha_spec", f"alpha_spec needs {len(self.tests)} levels, "
                                                f"got {len(self.alpha_spec)}")
        for a in self.alpha_spec:
            # 0 is the "never reject" limit: infinite critical value
            if not 0.0 <= a < 1.0:
                raise ValidationError("alpha_spec", "alpha_spec must lie in [0,1)")
        if self.reps < 1:
            raise ValidationError("reps", "reps must be at least 1")
        if self.n < 1:
            raise ValidationError("n", "n must be positive")
        if self.critical not in CRITICAL_METHODS:
            raise ValidationError("critical", f"critical must be one of {', '.join(CRITICAL_METHODS)}")
        if self.critical_draws < 1000 or self.known_draws < 1000:
            raise ValidationError("critical_draws", "critical value simulation needs at least 1000 draws")
        if self.mode not in MODES:
            raise ValidationError("mode", f"mode must be one of {', '.join(MODES)}")
        if self.mode == "theorem2" and self.dgp.family != "GaussianDirect":
            raise ValidationError("mode", "theorem2 mode needs the GaussianDirect family")
        known = self.dgp.family == "GaussianDirect"
        for t in self.tests:
            if t.kind == "bootstrapJ" and self.dgp.family != "GMM":
                raise ValidationError("tests", "bootstrapJ is only defined for the GMM family")
            if self.critical == "analytic" and (t.kind or "") not in ("F", ""):
                raise ValidationError("critical", "analytic critical values exist only for F tests")
            if self.critical == "bootstrap" and known:
                raise ValidationError("critical", "GaussianDirect has no data to bootstrap")
            if t.block is not None and t.block not in DEFAULT_BLOCKS[self.dgp.family]:
                raise ValidationError("tests", f"family {self.dgp.family} has no moment block {t.block!r}")
        if self.b0 is not None and len(self.b0) != true_beta(self.dgp).size:
            raise ValidationError("b0", f"b0 must have {true_beta(self.dgp).size} entries")

    @property
    def beta0(self) -> np.ndarray:
        return true_beta(self.dgp)

    @property
    def b0_vector(self) -> np.ndarray:
        return self.beta0 if self.b0 is None else np.asarray(self.b0)


@dataclass(frozen=True)
class ReplicationOutcome:
    """Result of one replication.

    ``rejected_F`` and ``covered_CR`` are set only when every specification
    test passed; ``uncond_rejected`` and ``uncond_covered`` are set on every
    valid replication.
    """

    rep_index: int
    valid: bool
    passed_spec: bool = False
    rejected_F: bool | None = None
    covered_CR: bool | None = None
    uncond_rejected: bool | None = None
    uncond_covered: bool | None = None
    combined: float = math.nan
    beta_hat: tuple = ()
    invalid_reason: str = ""


def wilson_interval(successes: int, trials: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise DomainError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0,1)")
    z = normal_quantile(0.5 + 0.5 * level)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + 0.5 * z2n) / (1.0 + z2n)
    half = z / (1.0 + z2n) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class MCReport:
    """Aggregate of a scenario's replications; rates derive from counts."""

    scenario_id: str
    rho: float
    n: int
    reps_total: int
    invalid_count: int
    reps_passed: int
    cond_rejections: int
    cond_covers: int
    uncond_rejections: int
    uncond_covers: int
    level: float = 0.95

    def __post_init__(self):
        if not 0 <= self.reps_passed <= self.reps_valid:
            raise DomainError("reps_passed must lie between 0 and the valid count")
        if not (0 <= self.cond_rejections <= self.reps_passed and 0 <= self.cond_covers <= self.reps_passed):
            raise DomainError("conditional counts exceed reps_passed")
        if not (0 <= self.uncond_rejections <= self.reps_valid and 0 <= self.uncond_covers <= self.reps_valid):
            raise DomainError("unconditional counts exceed the valid count")

    @property
    def reps_valid(self) -> int:
        return self.reps_total - self.invalid_count

    @property
    def pass_rate(self) -> float:
        return self.reps_passed / self.reps_total

    def _rate(self, k, m):
        return k / m if m else math.nan

    def _interval(self, k, m):
        return wilson_interval(k, m, self.level) if m else (math.nan, math.nan)

    @property
    def conditional_rejection(self) -> float:
        return self._rate(self.cond_rejections, self.reps_passed)

    @property
    def conditional_rejection_interval(self):
        return self._interval(self.cond_rejections, self.reps_passed)

    @property
    def conditional_coverage(self) -> float:
        return self._rate(self.cond_covers, self.reps_passed)

    @property
    def conditional_coverage_interval(self):
        return self._interval(self.cond_covers, self.reps_passed)

    @property
    def unconditional_rejection(self) -> float:
        return self._rate(self.uncond_rejections, self.reps_valid)

    @property
    def unconditional_rejection_interval(self):
        return self._interval(self.uncond_rejections, self.reps_valid)

    @property
    def unconditional_coverage(self) -> float:
        return self._rate(self.uncond_covers, self.reps_valid)

    @property
    def unconditional_coverage_interval(self):
        return self._interval(self.uncond_covers, self.reps_valid)

    @staticmethod
    def half_width(interval) -> float:
        return 0.5 * (interval[1] - interval[0])


# --- inference on beta --------------------------------------------------------

def _wald_form(bundle: EstimateBundle, b, n=None) -> float:
    dev = np.asarray(bundle.beta_hat, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    x = solve_psd(bundle.V_hat, dev, error=SingularVariance)
    form = float(dev @ x)
    if bundle.rate == "sqrt_n":
        form *= bundle.n if n is None else n
    return max(form, 0.0)


def f_test(bundle: EstimateBundle, b0, n=None, alpha: float = 0.05):
    """Wald/F test of ``beta = b0``: ``(statistic, reject)``.

    For root-n bundles the statistic is ``n (b - b0)' V^{-1} (b - b0)`` with
    ``V`` estimating the influence variance; otherwise ``V`` is the variance
    of the estimator itself and the factor ``n`` is absent.
    """
    stat = _wald_form(bundle, b0, n)
    return stat, bool(stat > chi2_quantile(1.0 - alpha, bundle.p))


def cr_covers(bundle: EstimateBundle, beta0_true, n=None, alpha: float = 0.05) -> bool:
    """Whether the (1 - alpha) Wald confidence region contains ``beta0_true``."""
    return bool(_wald_form(bundle, beta0_true, n) <= chi2_quantile(1.0 - alpha, bundle.p))


# --- specification tests on a bundle -----------------------------------------

def _select(spec: TestSpec, bundle: EstimateBundle, weights_override):
    block = bundle.block(spec.block) if spec.block else bundle.blocks[0]
    kind = spec.kind or block.default_kind
    theta = block.theta_hat
    h = block.influence
    w = block.weights
    if kind == "bootstrapJ":
        if spec.component:
            raise DomainError("bootstrapJ uses the whole moment vector")
        return kind, theta, h, w
    if w is not None and np.ndim(w) != 1:
        w = None
    if spec.component:
        idx = [spec.component - 1]
        if idx[0] >= theta.size:
            raise DomainError(f"block {block.name} has {theta.size} components")
        theta = theta[idx]
        h = None if h is None else h[:, idx]
        w = None if w is None else w[idx]
    if kind in ("weightedKS", "CvM"):
        if weights_override is not None:
            w = np.asarray(weights_override, dtype=np.float64)
            if w.size != theta.size:
                raise DomainError(f"{w.size} weights for {theta.size} moments")
        elif w is None or block.default_kind != kind:
            w = np.full(theta.size, 1.0 / theta.size) if kind == "CvM" else np.ones(theta.size)
    return kind, theta, h, w


def evaluate_test(bundle: EstimateBundle, spec: TestSpec, alpha: float, method: str = "simulate",
                  draws: int = 1000, stream: SeededStream | None = None, weights_override=None,
                  known_critical: float | None = None) -> SpecTestResult:
    """Statistic and critical value of one specification test."""
    kind, theta, h, w = _select(spec, bundle, weights_override)
    scale = math.sqrt(bundle.n) if bundle.rate == "sqrt_n" else 1.0
    if h is None:
        # known-variance mode: theta is already standardized
        v = scale * theta
        if kind == "F":
            stat = float(v @ v)
        elif kind == "weightedKS":
            stat = weighted_ks(EmpiricalProcessGrid(v, w))
        elif kind == "CvM":
            stat = cvm_statistic(EmpiricalProcessGrid(v, w))
        else:
            raise DomainError(f"{kind} needs influence values")
        if known_critical is None:
            raise DomainError("known-variance tests need a scenario-level critical value")
        return SpecTestResult(stat, known_critical, kind)

    n = bundle.n
    matrix = None
    if kind == "F":
        moments = theta + h
        stat = f_statistic(moments)
        second = moments.T @ moments / n
        matrix = solve_psd(0.5 * (second + second.T), np.eye(theta.size))
    elif kind == "bootstrapJ":
        matrix = w
        stat = quadratic_statistic(scale * theta, w)
    elif kind == "weightedKS":
        stat = weighted_ks(EmpiricalProcessGrid(scale * theta, w))
    else:
        stat = cvm_statistic(EmpiricalProcessGrid(scale * theta, w))

    if alpha == 0.0:
        crit = math.inf
    elif method == "analytic":
        if kind != "F":
            raise DomainError("analytic critical values exist only for F tests")
        crit = chi2_quantile(1.0 - alpha, theta.size)
    elif method == "bootstrap":
        crit = multiplier_bootstrap_critical_value(kind, h, matrix if matrix is not None else w, alpha, draws, stream)
    else:
        cov = h.T @ h / n
        crit = simulate_critical_value(kind, 0.5 * (cov + cov.T), matrix if matrix is not None else w,
                                       alpha, draws, stream)
    return SpecTestResult(stat, crit, kind)


def scenario_critical_values(config: ScenarioConfig):
    """Critical values fixed for the whole scenario (known-variance family).

    Returns ``None`` for families whose critical values are estimated in
    every replication.
    """
    if config.dgp.family != "GaussianDirect":
        return None
    probe = estimate_gaussian_direct(config.dgp, SeededStream(config.master_seed, _SCENARIO_STREAM),
                                     config.mode, config.n)
    out = []
    for j, (spec, alpha) in enumerate(zip(config.tests, config.alpha_spec)):
        kind, theta, _, w = _select(spec, probe, config.weights)
        dim = theta.size
        if alpha == 0.0:
            out.append(math.inf)
        elif config.critical == "analytic":
            out.append(chi2_quantile(1.0 - alpha, dim))
        else:
            weights = np.eye(dim) if kind == "F" else w
            stream = SeededStream(config.master_seed, _SCENARIO_STREAM + 1 + j)
            out.append(simulate_critical_value(kind, np.eye(dim), weights, alpha, config.known_draws, stream))
    return tuple(out)


def run_replication(config: ScenarioConfig, rep_index: int, known_critical=None) -> ReplicationOutcome:
    """Generate, estimate, test and run inference for replication ``rep_index``."""
    base = SeededStream(config.master_seed, rep_index)
    dgp = config.dgp
    try:
        if dgp.family == "GaussianDirect":
            if known_critical is None:
                known_critical = scenario_critical_values(config)
            bundle = estimate_gaussian_direct(dgp, base.child(0), config.mode, config.n)
        else:
            bundle = estimate(dgp, generate(dgp, config.n, base.child(0)))
        results = []
        for j, (spec, alpha) in enumerate(zip(config.tests, config.alpha_spec)):
            results.append(evaluate_test(
                bundle, spec, alpha, config.critical, config.critical_draws, base.child(1 + j),
                config.weights, None if known_critical is None else known_critical[j]))
        combined = combined_statistic(results)
        passed = combined <= 0.0
        _, rejected = f_test(bundle, config.b0_vector, alpha=config.alpha_inference)
        covered = cr_covers(bundle, config.beta0, alpha=config.alpha_inference)
    except (EstimationError, SingularMatrix, DegenerateCriticalValue) as exc:
        return ReplicationOutcome(rep_index, False, invalid_reason=f"{type(exc).__name__}: {exc}")
    return ReplicationOutcome(
        rep_index=rep_index,
        valid=True,
        passed_spec=passed,
        rejected_F=rejected if passed else None,
        covered_CR=covered if passed else None,
        uncond_rejected=rejected,
        uncond_covered=covered,
        combined=combined,
        beta_hat=tuple(float(b) for b in bundle.beta_hat),
    )


def _run_chunk(args):
    config, known, start, stop = args
    return [run_replication(config, r, known) for r in range(start, stop)]


def _aggregate(config, outcomes) -> MCReport:
    valid = [o for o in outcomes if o.valid]
    passed = [o for o in valid if o.passed_spec]
    return MCReport(
        scenario_id=config.scenario_id,
        rho=config.dgp.rho,
        n=config.n,
        reps_total=len(outcomes),
        invalid_count=len(outcomes) - len(valid),
        reps_passed=len(passed),
        cond_rejections=sum(o.rejected_F for o in passed),
        cond_covers=sum(o.covered_CR for o in passed),
        uncond_rejections=sum(o.uncond_rejected for o in valid),
        uncond_covers=sum(o.uncond_covered for o in valid),
    )


def run_outcomes(config: ScenarioConfig, workers: int = 1) -> list:
    """All replication outcomes, ordered by replication index."""
    known = scenario_critical_values(config)
    reps = config.reps
    if workers <= 1 or reps < 2:
        return [run_replication(config, r, known) for r in range(reps)]
    size = max(1, -(-reps // (workers * 8)))
    tasks = [(config, known, s, min(s + size, reps)) for s in range(0, reps, size)]
    ctx = multiprocessing.get_context("fork") if "fork" in multiprocessing.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        chunks = list(pool.map(_run_chunk, tasks))
    return [o for chunk in chunks for o in chunk]


def run_scenario(config: ScenarioConfig, workers: int = 1, return_outcomes: bool = False):
    """Run ``config.reps`` replications and aggregate them into an :class:`MCReport`."""
    outcomes = run_outcomes(config, workers)
    report = _aggregate(config, outcomes)
    if report.reps_valid == 0:
        reasons = {o.invalid_reason.split(":")[0] for o in outcomes}
        raise AllReplicationsInvalid(f"all {report.reps_total} replications invalid ({', '.join(sorted(reasons))})")
    if report.reps_passed == 0:
        raise AllReplicationsInvalid(f"no replication passed the specification tests "
                                     f"({report.reps_total} run); conditional rates are undefined")
    if report.invalid_count:
        log.warning("%s: %d of %d replications invalid", config.scenario_id or "scenario",
                    report.invalid_count, report.reps_total)
    if report.pass_rate < 0.01:
        warnings.warn(f"pass rate {report.pass_rate:.4f} is below 0.01; conditional rates are noisy",
                      RuntimeWarning, stacklevel=2)
    if return_outcomes:
        return report, outcomes
    return report
