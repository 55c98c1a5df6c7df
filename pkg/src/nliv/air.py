"""Adjusted inverse regression: recovering the exposure transform.

The index direction from stage one makes the scalar r = z'theta a noisy
image of the transformed exposure. Its conditional mean given x estimates
the transform up to scale, and the scale is pinned down by a moment ratio
that needs no extra nuisance estimates. Everything here touches only the
individual-level sample.
"""

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ._kernels import knn_means
from .core import StageOneData, format_float
from .errors import ConfigError, DegenerateRatio, DimensionMismatch, \
    GridMismatch, SampleSizeWarning, TooFewSamples

_SMOOTHERS = ("knn", "loclin")


@dataclass(frozen=True)
class SmootherConfig:
    method: str = "knn"
    k: int = 100
    bandwidth: Optional[float] = None

    def __post_init__(self):
        if self.method not in _SMOOTHERS:
            raise ConfigError(f"unknown smoother {self.method!r}")
        if self.k < 1:
            raise ConfigError(f"neighbor count must be positive, got {self.k}")
        if self.bandwidth is not None and self.bandwidth <= 0.0:
            raise ConfigError("bandwidth must be positive")


@dataclass(frozen=True)
class KnnMean:
    """k-nearest-neighbor conditional mean in one covariate.

    Evaluation outside the training range reuses the k edge points, so the
    fit clamps to its boundary value rather than extrapolating.
    """

    x_train: np.ndarray
    r_train: np.ndarray
    k: int

    def __call__(self, x) -> np.ndarray:
        xq = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
        return knn_means(self.x_train, self.r_train, xq, self.k)


@dataclass(frozen=True)
class LocalLinearMean:
    """Gaussian-kernel local linear regression in one covariate."""

    x_train: np.ndarray
    r_train: np.ndarray
    bandwidth: float

    def __call__(self, x) -> np.ndarray:
        xq = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
        out = np.empty(xq.shape[0])
        h = self.bandwidth
        for t in range(xq.shape[0]):
            u = (self.x_train - xq[t]) / h
            w = np.exp(-0.5 * u * u)
            sw = w.sum()
            if sw <= 0.0:
                # all weights underflowed; fall back to the nearest point
                out[t] = self.r_train[np.argmin(np.abs(u))]
                continue
            d = self.x_train - xq[t]
            s1 = w @ d
            s2 = w @ (d * d)
            b0 = w @ self.r_train
            b1 = w @ (self.r_train * d)
            det = sw * s2 - s1 * s1
            if abs(det) < 1e-12 * max(sw * s2, 1e-300):
                out[t] = b0 / sw
            else:
                out[t] = (s2 * b0 - s1 * b1) / det
        return out


def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.shape[0]
    sd = float(np.std(x))
    q75, q25 = np.quantile(x, [0.75, 0.25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    if spread <= 0.0:
        spread = max(abs(float(np.mean(x))), 1.0)
    return 0.9 * spread * n ** (-0.2)


def fit_conditional_mean(data: StageOneData, theta: np.ndarray,
                         config: SmootherConfig = SmootherConfig()
                         ) -> Callable:
    """Smoother for the conditional mean of the index given the exposure."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != data.p:
        raise DimensionMismatch(
            f"direction length {theta.shape[0]} but p={data.p}")
    n = data.n1
    if n < 2:
        raise TooFewSamples("conditional mean needs at least 2 rows")
    r = data.z1 @ theta
    if config.method == "loclin":
        h = config.bandwidth if config.bandwidth is not None \
            else silverman_bandwidth(data.x1)
        return LocalLinearMean(x_train=data.x1.copy(), r_train=r, bandwidth=h)
    k = config.k
    if k >= n:
        warnings.warn(
            f"neighbor count {k} >= sample size {n}; clamped to {n - 1}",
            SampleSizeWarning, stacklevel=2)
        k = n - 1
    elif n < 2 * k:
        warnings.warn(
            f"sample size {n} is below twice the neighbor count {k}; "
            f"the fit will be heavily smoothed", SampleSizeWarning,
            stacklevel=2)
    return KnnMean(x_train=data.x1.copy(), r_train=r, k=k)


def adjustment_ratio(data: StageOneData, theta: np.ndarray,
                     m_hat: Callable) -> float:
    """Scale correction ratio: index second moment over its smoothed image.

    Exactly the moment ratio sum_i (z_i'theta)^2 / sum_i m(x_i) z_i'theta,
    which cancels any positive rescaling of the smoother.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    r = data.z1 @ theta
    num = float(r @ r)
    den = float(np.asarray(m_hat(data.x1)).ravel() @ r)
    if abs(den) < 1e-10 * abs(num):
        raise DegenerateRatio(
            f"smoothed index barely correlates with the index "
            f"(|{den:.3e}| < 1e-10 |{num:.3e}|); no exposure signal")
    return num / den


@dataclass(frozen=True)
class TransformEstimate:
    """Estimated transform on an exposure grid.

    phi_hat = rho_hat * m(x) evaluated on x_grid; the smoother handle is
    kept so the estimate can be evaluated off-grid.
    """

    x_grid: np.ndarray
    phi_hat: np.ndarray
    rho_hat: float
    m_hat: Callable

    def __call__(self, x) -> np.ndarray:
        return self.rho_hat * np.asarray(self.m_hat(x))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "phi_hat"])
            for xi, pi in zip(self.x_grid, self.phi_hat):
                w.writerow([format_float(xi), format_float(pi)])


def estimate_transform(data: StageOneData, theta: np.ndarray,
                       config: SmootherConfig = SmootherConfig(),
                       grid_size: int = 100) -> TransformEstimate:
    """Transform estimate on an interior exposure grid.

    The grid spans the 5% to 95% exposure quantiles, which keeps every
    evaluation point inside the smoother's well-supported range.
    """
    if grid_size < 2:
        raise ConfigError(f"grid needs at least 2 points, got {grid_size}")
    m_hat = fit_conditional_mean(data, theta, config)
    rho = adjustment_ratio(data, theta, m_hat)
    lo, hi = np.quantile(data.x1, [0.05, 0.95])
    grid = np.linspace(lo, hi, grid_size)
    phi = rho * np.asarray(m_hat(grid))
    return TransformEstimate(x_grid=grid, phi_hat=phi, rho_hat=rho,
                             m_hat=m_hat)


def transform_error(estimate: TransformEstimate,
                    truth: Union[Callable, np.ndarray]) -> tuple:
    """(mean squared error, max absolute error) against the truth on the grid.

    truth may be a callable evaluated on the estimate's grid, or an array
    of values already on that grid.
    """
    if callable(truth):
        ref = np.asarray(truth(estimate.x_grid), dtype=np.float64).ravel()
    else:
        ref = np.asarray(truth, dtype=np.float64).ravel()
    if ref.shape != estimate.phi_hat.shape:
        raise GridMismatch(
            f"truth has {ref.shape[0]} values for a grid of "
            f"{estimate.phi_hat.shape[0]}")
    diff = estimate.phi_hat - ref
    return float(np.mean(diff * diff)), float(np.max(np.abs(diff)))
