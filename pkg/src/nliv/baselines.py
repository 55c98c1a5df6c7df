"""Comparator estimators: two-stage least squares and its power-transformed
variant.

Both assume a linear (or linearizable) exposure-outcome relation, which is
exactly the assumption the index model relaxes; they serve as benchmark
columns. Stage one runs on the individual-level sample, stage two on the
summary moments, with the standard two-sample plug-in variance.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import StageOneData, SummaryStats, center
from .errors import DegenerateDenominator, DimensionMismatch, \
    SingularCovariance
from .inference import ConfidenceInterval, TestResult
from .sir import JITTER_REL
from scipy.stats import norm


def _jittered_covariance(z: np.ndarray) -> np.ndarray:
    n, p = z.shape
    sig = z.T @ z / n
    sig = 0.5 * (sig + sig.T)
    eps = JITTER_REL * np.trace(sig) / p
    evmin = float(np.linalg.eigvalsh(sig)[0])
    if evmin < eps:
        if evmin + eps <= 0.0:
            raise SingularCovariance(
                f"instrument covariance min eigenvalue {evmin:.3e} "
                f"not repairable by ridge {eps:.3e}")
        sig = sig + eps * np.eye(p)
    return sig


def fit_2sls(data: StageOneData, stats: SummaryStats) -> tuple:
    """Two-sample two-stage least squares: (beta, se).

    Stage one projects the exposure on the instruments in the individual
    sample; stage two regresses the outcome moments on that projection.
    """
    if data.p != stats.p:
        raise DimensionMismatch(
            f"instrument count mismatch: stage one has p={data.p}, "
            f"summary has p={stats.p}")
    cd = center(data)
    sig = _jittered_covariance(cd.z1)
    cxz = cd.z1.T @ cd.x1 / data.n1
    gamma = np.linalg.solve(sig, cxz)
    denom = float(gamma @ stats.s_zz @ gamma)
    if denom <= 1e-12 * max(1.0, float(np.trace(stats.s_zz))):
        raise DegenerateDenominator(
            f"projected exposure variance {denom:.3e} is too small; "
            f"instruments do not predict the exposure")
    beta = float(gamma @ stats.s_zy) / denom
    sig2 = float(stats.s_yy - 2.0 * beta * (gamma @ stats.s_zy)
                 + beta * beta * denom)
    sig2 = max(sig2, 0.0)
    se = math.sqrt(sig2 / (stats.n2 * denom))
    return beta, se


@dataclass(frozen=True)
class YeoJohnsonFit:
    lam: float
    loglik: float


def _yj_apply(x: np.ndarray, lam: float) -> np.ndarray:
    pos = x >= 0.0
    out = np.empty_like(x)
    xp = x[pos]
    if abs(lam) < 1e-12:
        out[pos] = np.log1p(xp)
    else:
        out[pos] = (np.power(xp + 1.0, lam) - 1.0) / lam
    xn = x[~pos]
    if abs(lam - 2.0) < 1e-12:
        out[~pos] = -np.log1p(-xn)
    else:
        out[~pos] = -(np.power(1.0 - xn, 2.0 - lam) - 1.0) / (2.0 - lam)
    return out


def _yj_loglik(x: np.ndarray, lam: float) -> float:
    t = _yj_apply(x, lam)
    var = float(np.mean((t - t.mean()) ** 2))
    n = x.shape[0]
    jac = float(np.sum(np.sign(x) * np.log1p(np.abs(x))))
    return -0.5 * n * math.log(max(var, 1e-300)) + (lam - 1.0) * jac


def yeo_johnson(x, lo: float = -5.0, hi: float = 5.0,
                tol: float = 1e-6) -> tuple:
    """Gaussianizing power transform with MLE shape: (transformed, fit).

    The profile likelihood is maximized by golden-section search on the
    bracket; the returned values are shifted to zero mean.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("exposure must be finite")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _yj_loglik(x, c)
    fd = _yj_loglik(x, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _yj_loglik(x, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _yj_loglik(x, d)
    lam = 0.5 * (a + b)
    t = _yj_apply(x, lam)
    return t - t.mean(), YeoJohnsonFit(lam=lam, loglik=_yj_loglik(x, lam))


def fit_pt2sls(data: StageOneData, stats: SummaryStats) -> tuple:
    """Two-stage least squares on the power-transformed exposure."""
    t, _ = yeo_johnson(data.x1)
    return fit_2sls(StageOneData(data.z1, t), stats)


def baseline_test(beta: float, se: float, method: str) -> TestResult:
    """Two-sided Wald test for a baseline estimate."""
    if se <= 0.0:
        raise DegenerateDenominator("standard error must be positive")
    stat = abs(beta) / se
    p = min(1.0, 2.0 * float(norm.sf(stat)))
    return TestResult(statistic=float(stat), p_value=p, method=method,
                      n_slices=None)


def baseline_interval(beta: float, se: float, level: float = 0.95
                      ) -> ConfidenceInterval:
    """Asymptotic interval, left-truncated at zero like the main method."""
    zq = float(norm.ppf(0.5 + level / 2.0))
    return ConfidenceInterval(lower=max(0.0, beta - zq * se),
                              upper=beta + zq * se, level=level,
                              monte_carlo_size=0)
