"""Monte Carlo harness: runs a design many times and aggregates per-method
operating characteristics into machine-readable tables.

Each replication draws a fresh dataset from a seed derived as (seed, rep),
so results are bit-reproducible and independent of execution order. A
replication that raises a package error for some method is excluded from
that method's aggregates; if more than the allowed fraction fail the run
aborts, since aggregates over a censored subset would be misleading.
"""

import csv
import os
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .air import SmootherConfig, estimate_transform, fit_conditional_mean, \
    transform_error
from .baselines import _yj_apply, baseline_interval, baseline_test, fit_2sls, \
    fit_pt2sls, yeo_johnson
from .core import format_float
from .errors import ConfigError, ExcessFailures, NlivError
from .inference import BootstrapConfig, CombineConfig, combined_test, \
    confidence_interval, effect_test
from .simgen import SimDesign, generate
from .stage2 import Stage2Config, fit_2sir

METHODS = ("2SIR", "Comb-2SIR", "2SLS", "PT-2SLS", "AIR",
           "PHI-2SLS", "PHI-PT2SLS", "PHI-KNN")
_TEST_METHODS = ("2SIR", "Comb-2SIR", "2SLS", "PT-2SLS")
_NEEDS_FIT = ("2SIR", "AIR", "PHI-KNN")
_NEEDS_GRID = ("AIR", "PHI-2SLS", "PHI-PT2SLS", "PHI-KNN")
MAX_FAILURE_FRAC = 0.05


@dataclass(frozen=True)
class BenchSpec:
    design: SimDesign
    methods: Sequence[str] = ("2SIR", "Comb-2SIR", "2SLS", "PT-2SLS")
    replications: int = 500
    alpha: float = 0.05
    ci_level: float = 0.95
    seed: int = 0
    boot_draws: int = 1000
    with_ci: bool = True
    n_slices: int = 10
    knn_k: int = 100
    grid_size: int = 100

    def __post_init__(self):
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; known: {METHODS}")
        object.__setattr__(self, "methods", methods)
        if self.replications < 50:
            raise ConfigError(
                f"need at least 50 replications, got {self.replications}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.with_ci:
            # probe construction so a bad draw count fails up front,
            # not once per replication
            BootstrapConfig(n_draws=self.boot_draws, level=self.ci_level)


@dataclass
class MethodMetrics:
    rejection_rate: Optional[float] = None
    mc_se: Optional[float] = None
    coverage: Optional[float] = None
    mean_ci_length: Optional[float] = None
    mse: Optional[float] = None
    ue: Optional[float] = None
    seconds_per_rep: float = 0.0
    n_used: int = 0
    n_failed: int = 0


@dataclass(frozen=True)
class BenchResult:
    spec: BenchSpec
    metrics: dict
    failures: dict


class _Accum:
    __slots__ = ("reject", "cover", "length", "mse", "ue", "seconds", "fails")

    def __init__(self):
        self.reject = []
        self.cover = []
        self.length = []
        self.mse = []
        self.ue = []
        self.seconds = 0.0
        self.fails = 0


def run_bench(spec: BenchSpec) -> BenchResult:
    d = spec.design
    acc = {m: _Accum() for m in spec.methods}
    s2cfg = Stage2Config()
    smoother = SmootherConfig(k=spec.knn_k)
    for rep in range(spec.replications):
        d1, d2, truth = generate(d, (spec.seed, rep))
        fit = None
        fit_err = None
        fit_elapsed = 0.0
        if any(m in spec.methods for m in _NEEDS_FIT):
            t0 = time.perf_counter()
            try:
                fit = fit_2sir(d1, d2, n_slices=spec.n_slices, config=s2cfg)
            except NlivError as exc:
                fit_err = exc
            fit_elapsed = time.perf_counter() - t0
        grid = None
        truth_vals = None
        if any(m in spec.methods for m in _NEEDS_GRID):
            lo, hi = np.quantile(d1.x1, [0.05, 0.95])
            grid = np.linspace(lo, hi, spec.grid_size)
            truth_vals = np.asarray(truth["phi0_fn"](grid), dtype=np.float64)
        for m in spec.methods:
            a = acc[m]
            # charge the shared two-stage fit to every method that needs it,
            # so each per-method time reads as its standalone cost
            t0 = time.perf_counter()
            try:
                _run_method(m, spec, d1, d2, truth, fit, fit_err, grid,
                            truth_vals, smoother, a, rep)
            except NlivError:
                a.fails += 1
            a.seconds += time.perf_counter() - t0
            if m in _NEEDS_FIT:
                a.seconds += fit_elapsed
    failures = {m: acc[m].fails for m in spec.methods}
    for m, nf in failures.items():
        if nf > MAX_FAILURE_FRAC * spec.replications:
            raise ExcessFailures(
                f"{nf} of {spec.replications} replications failed for {m}, "
                f"over the {MAX_FAILURE_FRAC:.0%} budget")
    metrics = {}
    for m in spec.methods:
        a = acc[m]
        mm = MethodMetrics(n_failed=a.fails)
        if a.reject:
            r = float(np.mean(a.reject))
            mm.rejection_rate = r
            mm.mc_se = float(np.sqrt(r * (1.0 - r) / len(a.reject)))
            mm.n_used = len(a.reject)
        if a.cover:
            mm.coverage = float(np.mean(a.cover))
            mm.mean_ci_length = float(np.mean(a.length))
            mm.n_used = max(mm.n_used, len(a.cover))
        if a.mse:
            mm.mse = float(np.mean(a.mse))
            mm.ue = float(np.mean(a.ue))
            mm.n_used = max(mm.n_used, len(a.mse))
        attempted = spec.replications
        mm.seconds_per_rep = a.seconds / attempted if attempted else 0.0
        metrics[m] = mm
    return BenchResult(spec=spec, metrics=metrics, failures=failures)


def _run_method(m, spec, d1, d2, truth, fit, fit_err, grid, truth_vals,
                smoother, a, rep):
    if m in _NEEDS_FIT and fit is None:
        raise fit_err
    if m == "2SIR":
        res = effect_test(fit, d2.n2)
        a.reject.append(res.p_value <= spec.alpha)
        if spec.with_ci:
            boot = BootstrapConfig(n_draws=spec.boot_draws,
                                   seed=(spec.seed, rep, 1),
                                   level=spec.ci_level)
            ci = confidence_interval(d1, d2, boot=boot, fit=fit)
            a.cover.append(ci.lower <= truth["beta0_sir"] <= ci.upper)
            # symmetric width before truncation at zero
            a.length.append(2.0 * (ci.upper - fit.beta_hat))
    elif m == "Comb-2SIR":
        res = combined_test(d1, d2, config=Stage2Config(),
                            combine=CombineConfig())
        a.reject.append(res.p_value <= spec.alpha)
    elif m in ("2SLS", "PT-2SLS"):
        beta, se = (fit_2sls if m == "2SLS" else fit_pt2sls)(d1, d2)
        res = baseline_test(beta, se, m)
        a.reject.append(res.p_value <= spec.alpha)
        if spec.with_ci:
            ci = baseline_interval(beta, se, spec.ci_level)
            a.cover.append(ci.lower <= truth["beta0"] <= ci.upper)
            a.length.append(2.0 * (ci.upper - beta))
    elif m == "AIR":
        est = estimate_transform(d1, fit.theta_unit, smoother,
                                 spec.grid_size)
        mse, ue = transform_error(est, truth_vals)
        a.mse.append(mse)
        a.ue.append(ue)
    elif m == "PHI-2SLS":
        diff = grid - truth_vals
        a.mse.append(float(np.mean(diff * diff)))
        a.ue.append(float(np.max(np.abs(diff))))
    elif m == "PHI-PT2SLS":
        t, yj = yeo_johnson(d1.x1)
        sd = float(np.sqrt(np.mean(t * t)))
        base = _yj_apply(np.asarray(grid, dtype=np.float64), yj.lam)
        shift = float(np.mean(_yj_apply(d1.x1, yj.lam)))
        vals = (base - shift) / max(sd, 1e-300)
        diff = vals - truth_vals
        a.mse.append(float(np.mean(diff * diff)))
        a.ue.append(float(np.max(np.abs(diff))))
    elif m == "PHI-KNN":
        raw = fit.direction.theta
        raw_unit = raw / np.linalg.norm(raw)
        mhat = fit_conditional_mean(d1, raw_unit, smoother)
        diff = np.asarray(mhat(grid)) - truth_vals
        a.mse.append(float(np.mean(diff * diff)))
        a.ue.append(float(np.max(np.abs(diff))))
    else:  # pragma: no cover
        raise ConfigError(f"unknown method {m!r}")


_METRIC_FIELDS = ("rejection_rate", "mc_se", "coverage", "mean_ci_length",
                  "mse", "ue", "seconds_per_rep", "n_used", "n_failed")


def emit(results, out_dir) -> None:
    """Write results.csv (method x metric rows) and curves.csv (power vs
    effect size) for one result or a sequence of results."""
    if isinstance(results, BenchResult):
        results = [results]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["transform", "beta", "n", "p", "method", "metric",
                    "value"])
        for res in results:
            d = res.spec.design
            for m in res.spec.methods:
                mm = res.metrics[m]
                for f in _METRIC_FIELDS:
                    v = getattr(mm, f)
                    if v is None:
                        continue
                    w.writerow([d.transform, format_float(d.beta), d.n, d.p,
                                m, f, format_float(v)])
    with open(os.path.join(out_dir, "curves.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["transform", "beta", "method", "power"])
        for res in results:
            d = res.spec.design
            for m in res.spec.methods:
                mm = res.metrics[m]
                if mm.rejection_rate is None:
                    continue
                w.writerow([d.transform, format_float(d.beta), m,
                            format_float(mm.rejection_rate)])


def power_curve(spec: BenchSpec, betas: Sequence[float]) -> list:
    """Rerun a benchmark setup at several effect sizes; one result per beta."""
    out = []
    for b in betas:
        d = replace(spec.design, beta=float(b))
        out.append(run_bench(replace(spec, design=d)))
    return out
