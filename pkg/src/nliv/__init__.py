"""Nonlinear instrumental-variable inference from two samples.

The estimand is the effect of a monotone transform of an exposure on an
outcome, identified through instruments that may act on the outcome
directly. Stage one recovers the instrument combination driving the
exposure from an individual-level sample by slicing; stage two separates
the causal effect from direct instrument effects using only second
moments of an independent sample, with a concave penalty on the direct
effects. On top of the point fit sit a normal test of zero effect, a
Cauchy combination of tests across slice counts, a parametric-resampling
confidence interval, and a ratio-adjusted smoother that recovers the
transform itself.
"""

from ._backend import BACKEND, active_backend
from .air import KnnMean, LocalLinearMean, SmootherConfig, TransformEstimate, \
    adjustment_ratio, estimate_transform, fit_conditional_mean, \
    silverman_bandwidth, transform_error
from .baselines import YeoJohnsonFit, baseline_interval, baseline_test, \
    fit_2sls, fit_pt2sls, yeo_johnson
from .bench import BenchResult, BenchSpec, METHODS, MethodMetrics, emit, \
    power_curve, run_bench
from .core import StageOneData, SummaryStats, center, derived_rng, \
    dumps_json, load_stage_one, load_summary, save_stage_one, save_summary, \
    summarize
from .errors import BadSliceCount, BootstrapFailure, CombinationWarning, \
    ConfigError, DegenerateDenominator, DegenerateRatio, \
    DegenerateSpectrumWarning, DimensionMismatch, DomainError, EmptyData, \
    ExcessFailures, GridMismatch, NegativeVariance, NlivError, \
    NoConvergence, ParseError, SampleSizeWarning, SchemaError, \
    SingularCovariance, SingularGram, SupportTooLarge, TooFewSamples, \
    VarianceClampWarning
from .inference import BootstrapConfig, CombineConfig, ConfidenceInterval, \
    TestResult, cauchy_combine, combined_test, confidence_interval, \
    effect_test, empirical_quantile, test_statistic
from .simgen import MISSPECS, SimDesign, TRANSFORMS, example_design, \
    generate, population_sigma, transform_study_design
from .sir import SirDirection, SirMoments, SlicePartition, fit_direction, \
    sir_direction, sir_moments, slice_partition, slice_quotas
from .stage2 import CausalFit, Stage2Config, Stage2Result, \
    beta_given_support, default_k_max, fit_2sir, fit_stage2, mean_rss, \
    noise_variance, residual_covariance

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "active_backend",
    "KnnMean", "LocalLinearMean", "SmootherConfig", "TransformEstimate",
    "adjustment_ratio", "estimate_transform", "fit_conditional_mean",
    "silverman_bandwidth", "transform_error",
    "YeoJohnsonFit", "baseline_interval", "baseline_test", "fit_2sls",
    "fit_pt2sls", "yeo_johnson",
    "BenchResult", "BenchSpec", "METHODS", "MethodMetrics", "emit",
    "power_curve", "run_bench",
    "StageOneData", "SummaryStats", "center", "derived_rng", "dumps_json",
    "load_stage_one", "load_summary", "save_stage_one", "save_summary",
    "summarize",
    "BadSliceCount", "BootstrapFailure", "CombinationWarning", "ConfigError",
    "DegenerateDenominator", "DegenerateRatio", "DegenerateSpectrumWarning",
    "DimensionMismatch", "DomainError", "EmptyData", "ExcessFailures",
    "GridMismatch", "NegativeVariance", "NlivError", "NoConvergence",
    "ParseError", "SampleSizeWarning", "SchemaError", "SingularCovariance",
    "SingularGram", "SupportTooLarge", "TooFewSamples",
    "VarianceClampWarning",
    "BootstrapConfig", "CombineConfig", "ConfidenceInterval", "TestResult",
    "cauchy_combine", "combined_test", "confidence_interval", "effect_test",
    "empirical_quantile", "test_statistic",
    "MISSPECS", "SimDesign", "TRANSFORMS", "example_design", "generate",
    "population_sigma", "transform_study_design",
    "SirDirection", "SirMoments", "SlicePartition", "fit_direction",
    "sir_direction", "sir_moments", "slice_partition", "slice_quotas",
    "CausalFit", "Stage2Config", "Stage2Result", "beta_given_support",
    "default_k_max", "fit_2sir", "fit_stage2", "mean_rss", "noise_variance",
    "residual_covariance",
    "__version__",
]
