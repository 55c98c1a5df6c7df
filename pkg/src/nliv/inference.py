"""Hypothesis tests and confidence intervals for the index effect.

The single-slicing test is a one-parameter Wald test of no effect built
from the two-stage fit. Because the effect is constrained nonnegative the
test is naturally one-sided in the statistic; the reported p-value uses
the two-sided normal tail convention. Sensitivity to the slice count is
absorbed by a Cauchy combination across several slicings. Interval
estimation bootstraps stage one only: the summary sample enters through a
single normal draw calibrated by the fitted noise level.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from ._kernels import boot_sir
from .core import StageOneData, SummaryStats, center, derived_rng
from .errors import BootstrapFailure, CombinationWarning, ConfigError, \
    DimensionMismatch, EmptyData, NlivError, TooFewSamples
from .sir import JITTER_REL, slice_quotas
from .stage2 import CausalFit, Stage2Config, fit_2sir, residual_covariance

_P_CLAMP = 1e-15


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_slices: Optional[int] = None


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    monte_carlo_size: int


@dataclass(frozen=True)
class BootstrapConfig:
    n_draws: int = 1000
    seed: Union[int, tuple] = 0
    level: float = 0.95
    max_failure_frac: float = 0.10

    def __post_init__(self):
        if self.n_draws < 100:
            raise ConfigError(
                f"interval calibration needs at least 100 draws, "
                f"got {self.n_draws}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if not 0.0 <= self.max_failure_frac < 1.0:
            raise ConfigError("max_failure_frac must lie in [0, 1)")


@dataclass(frozen=True)
class CombineConfig:
    slice_counts: Sequence[int] = (2, 3, 5, 10)
    weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        counts = tuple(int(s) for s in self.slice_counts)
        if len(counts) == 0:
            raise ConfigError("need at least one slice count to combine")
        if any(s < 2 for s in counts):
            raise ConfigError(f"slice counts must be at least 2, got {counts}")
        object.__setattr__(self, "slice_counts", counts)
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != len(counts):
                raise ConfigError(
                    f"{len(w)} weights for {len(counts)} slice counts")
            if any(v < 0 for v in w) or sum(w) <= 0:
                raise ConfigError("weights must be nonnegative with a "
                                  "positive sum")
            object.__setattr__(self, "weights", w)


def effect_test(fit: CausalFit, n2: int,
                variance_consistent: bool = False) -> TestResult:
    """Wald test of zero effect from an existing two-stage fit.

    The default statistic scales the effect by the fitted noise level over
    the root index variance. The alternative scaling multiplies by the root
    index variance instead; both agree when no invalid instruments were
    selected, since the stage-one normalization pins the index variance
    near one.
    """
    q = 1.0 / fit.omega_x_hat
    root_q = float(np.sqrt(q))
    if variance_consistent:
        stat = np.sqrt(n2) * fit.beta_hat * root_q / fit.sigma_e_hat
    else:
        stat = np.sqrt(n2) * fit.beta_hat / (fit.sigma_e_hat * root_q)
    p = min(1.0, 2.0 * float(norm.sf(stat)))
    return TestResult(statistic=float(stat), p_value=p, method="2SIR",
                      n_slices=fit.n_slices)


def test_statistic(data: StageOneData, summary: SummaryStats,
                   n_slices: int = 10,
                   config: Stage2Config = Stage2Config(),
                   variance_consistent: bool = False) -> TestResult:
    fit = fit_2sir(data, summary, n_slices=n_slices, config=config)
    return effect_test(fit, summary.n2, variance_consistent=variance_consistent)


def cauchy_combine(p_values: Sequence[float],
                   weights: Optional[Sequence[float]] = None) -> tuple:
    """Weighted Cauchy combination; returns (statistic, p_value)."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        raise ConfigError("no p-values to combine")
    if weights is None:
        w = np.full(p.size, 1.0 / p.size)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != p.shape:
            raise DimensionMismatch(
                f"{w.size} weights for {p.size} p-values")
        w = w / w.sum()
    p = np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)
    t0 = float(np.sum(w * np.tan((0.5 - p) * np.pi)))
    pval = 0.5 - np.arctan(t0) / np.pi
    return t0, float(min(1.0, max(pval, 0.0)))


def empirical_quantile(values, level: float) -> float:
    """ceil(level*m)-th order statistic, by partial selection.

    Matches the value a full sort would put at that rank, without the
    full sort. The rank is clamped to [1, m].
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    m = v.size
    if m == 0:
        raise EmptyData("quantile of an empty sample")
    k = int(np.ceil(level * m))
    k = min(max(k, 1), m)
    return float(np.partition(v, k - 1)[k - 1])


def combined_test(data: StageOneData, summary: SummaryStats,
                  config: Stage2Config = Stage2Config(),
                  combine: CombineConfig = CombineConfig(),
                  variance_consistent: bool = False) -> TestResult:
    """Cauchy-combined test across several slice counts.

    Slice counts whose fit fails outright are dropped with a warning and
    the remaining weights are renormalized.
    """
    counts = combine.slice_counts
    weights = combine.weights if combine.weights is not None \
        else [1.0] * len(counts)
    kept_p, kept_w = [], []
    last_err = None
    for s, w in zip(counts, weights):
        try:
            res = test_statistic(data, summary, n_slices=s, config=config,
                                 variance_consistent=variance_consistent)
        except NlivError as exc:
            warnings.warn(
                f"slice count {s} dropped from the combined test: {exc}",
                CombinationWarning, stacklevel=2)
            last_err = exc
            continue
        kept_p.append(res.p_value)
        kept_w.append(w)
    if not kept_p:
        raise last_err if last_err is not None else ConfigError(
            "no slice counts produced a test")
    t0, pval = cauchy_combine(kept_p, kept_w)
    return TestResult(statistic=t0, p_value=pval, method="Comb-2SIR",
                      n_slices=None)


def confidence_interval(data: StageOneData, summary: SummaryStats,
                        boot: BootstrapConfig = BootstrapConfig(),
                        fit: Optional[CausalFit] = None,
                        n_slices: int = 10,
                        config: Stage2Config = Stage2Config()) -> ConfidenceInterval:
    """Bootstrap-calibrated interval for the effect on the stage-one scale.

    Stage one is bootstrapped by multinomial row multiplicities, which is
    distribution-identical to resampling rows with replacement but lets
    every resample walk the presorted exposure order. The summary-sample
    uncertainty enters as a single normal draw per resample with the
    fitted noise scale; the two pieces are combined into a pivot whose
    upper quantile calibrates a symmetric interval, truncated at zero
    because the effect is nonnegative by convention.
    """
    if fit is None:
        fit = fit_2sir(data, summary, n_slices=n_slices, config=config)
    n1 = data.n1
    if n1 < 2 * fit.n_slices:
        raise TooFewSamples(
            f"{n1} stage-one rows cannot be resliced into {fit.n_slices}")
    M = boot.n_draws
    cd = center(data)
    x_order = np.argsort(cd.x1, kind="stable")
    quotas = slice_quotas(n1, fit.n_slices)
    rng = derived_rng(boot.seed)
    counts = rng.multinomial(n1, np.ones(n1) / n1, size=M).astype(np.int64)
    zeta = rng.normal(0.0, np.sqrt(fit.omega_x_hat) * fit.sigma_e_hat, size=M)
    thetas, ok = boot_sir(cd.z1, x_order, counts, quotas, JITTER_REL)
    okb = ok.astype(bool)
    n_ok = int(okb.sum())
    n_fail = M - n_ok
    if n_fail > boot.max_failure_frac * M:
        raise BootstrapFailure(
            f"{n_fail} of {M} resamples failed stage one; exceeds the "
            f"{boot.max_failure_frac:.0%} budget")
    th = thetas[okb]
    sgn = np.sign(th @ fit.theta_hat)
    sgn[sgn == 0.0] = 1.0
    th = th * sgn[:, None]
    resid_cov = residual_covariance(summary.s_zz, fit.invalid_set)
    q_hat = 1.0 / fit.omega_x_hat
    q_star = np.einsum("mi,ij,mj->m", th, resid_cov, th)
    eta = 0.5 * np.sqrt(summary.n2) * fit.beta_hat * fit.omega_x_hat \
        * (q_star - q_hat)
    pivot = np.abs(zeta[okb] - eta)
    half = empirical_quantile(pivot, boot.level) / np.sqrt(summary.n2)
    return ConfidenceInterval(lower=max(0.0, fit.beta_hat - half),
                              upper=fit.beta_hat + half,
                              level=boot.level, monte_carlo_size=n_ok)
