"""Stage two: invalid-instrument selection on the summary sample.

Given the direction from stage one, the outcome moments are fit with a
direction coefficient plus a sparse vector of direct instrument effects.
Nonconvex penalties (SCAD, MCP, truncated L1) generate candidate supports
along a decreasing penalty path in standardized coordinates; every
candidate is refit without shrinkage and the final support is chosen by
BIC, by a size cap, or by exhaustive subset search on small problems.
"""

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._kernels import cd_path
from .core import StageOneData, SummaryStats, center
from .errors import ConfigError, DegenerateDenominator, DimensionMismatch, \
    NegativeVariance, NoConvergence, SingularCovariance, SingularGram, \
    VarianceClampWarning
from .sir import SirDirection, fit_direction

_PENALTY_CODES = {"scad": 0, "mcp": 1, "tlp": 2}
_RSS_FLOOR = 1e-300


@dataclass(frozen=True)
class Stage2Config:
    penalty: str = "scad"
    scad_a: float = 3.7
    mcp_a: float = 3.0
    tlp_tau: float = 0.01
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 10000
    selection: Union[str, int] = "bic"
    k_max: Optional[int] = None

    def __post_init__(self):
        if self.penalty not in _PENALTY_CODES:
            raise ConfigError(f"unknown penalty {self.penalty!r}")
        if self.scad_a <= 2.0:
            raise ConfigError("scad_a must exceed 2")
        if self.mcp_a <= 1.0:
            raise ConfigError("mcp_a must exceed 1")
        if self.tlp_tau <= 0.0:
            raise ConfigError("tlp_tau must be positive")
        if self.n_lambda < 1:
            raise ConfigError("n_lambda must be at least 1")
        if not 0.0 < self.lambda_min_ratio <= 1.0:
            raise ConfigError("lambda_min_ratio must lie in (0, 1]")
        if self.tol <= 0.0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if isinstance(self.selection, bool) or (
                not isinstance(self.selection, int)
                and self.selection not in ("bic", "exhaustive")):
            raise ConfigError(
                f"selection must be 'bic', 'exhaustive', or an int, "
                f"got {self.selection!r}")
        if isinstance(self.selection, int) and self.selection < 0:
            raise ConfigError("fixed-size selection needs a nonnegative int")
        if self.k_max is not None and self.k_max < 0:
            raise ConfigError("k_max must be nonnegative")

    @property
    def penalty_code(self) -> int:
        return _PENALTY_CODES[self.penalty]

    @property
    def penalty_shape(self) -> float:
        return self.scad_a if self.penalty == "scad" else self.mcp_a


def default_k_max(p: int) -> int:
    """Largest admissible invalid set: strictly under half the instruments."""
    return int(np.ceil(p / 2)) - 1


def beta_given_support(s_zz: np.ndarray, s_zy: np.ndarray, theta: np.ndarray,
                       support) -> tuple:
    """Unpenalized refit of (beta, alpha_A) for a fixed direct-effect support.

    Solves the bordered normal equations of the moment least squares with
    the direction held fixed. alpha comes back as a full-length vector,
    zero off the support.
    """
    p = s_zz.shape[0]
    A = np.asarray(sorted(set(int(j) for j in support)), dtype=np.intp)
    if A.size and (A[0] < 0 or A[-1] >= p):
        raise DimensionMismatch(f"support index out of range for p={p}")
    st = s_zz @ theta
    c = float(theta @ st)
    k = A.size
    M = np.empty((k + 1, k + 1))
    rhs = np.empty(k + 1)
    M[0, 0] = c
    rhs[0] = float(s_zy @ theta)
    if k:
        M[0, 1:] = st[A]
        M[1:, 0] = st[A]
        M[1:, 1:] = s_zz[np.ix_(A, A)]
        rhs[1:] = s_zy[A]
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(
            f"refit system singular for support {tuple(int(j) for j in A)}"
        ) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularGram(
            f"refit system ill conditioned for support {tuple(int(j) for j in A)}")
    alpha = np.zeros(p)
    if k:
        alpha[A] = sol[1:]
    return float(sol[0]), alpha


def mean_rss(summary: SummaryStats, beta: float, theta: np.ndarray,
             alpha: np.ndarray) -> float:
    """Per-observation residual second moment of the combined coefficient."""
    b = beta * theta + alpha
    val = float(summary.s_yy - 2.0 * (summary.s_zy @ b) + b @ summary.s_zz @ b)
    return max(val, _RSS_FLOOR)


def residual_covariance(s_zz: np.ndarray, support) -> np.ndarray:
    """Instrument covariance with the supported block projected out."""
    A = np.asarray(sorted(set(int(j) for j in support)), dtype=np.intp)
    if A.size == 0:
        return s_zz.copy()
    SA = s_zz[:, A]
    try:
        sol = np.linalg.solve(s_zz[np.ix_(A, A)], SA.T)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(
            f"supported block singular for support {tuple(int(j) for j in A)}"
        ) from exc
    out = s_zz - SA @ sol
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class Stage2Result:
    beta: float
    alpha: np.ndarray
    support: tuple
    score: float
    criterion: str
    lambdas: np.ndarray
    n_candidates: int
    path_monotone: bool
    path_converged: bool


def _path_supports(summary: SummaryStats, theta: np.ndarray,
                   config: Stage2Config):
    """Candidate supports swept out by the penalized path."""
    S = summary.s_zz
    p = summary.p
    d = np.diag(S).copy()
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise SingularGram("instrument second moments must be positive")
    sd = np.sqrt(d)
    R = S / np.outer(sd, sd)
    R = 0.5 * (R + R.T)
    st = S @ theta
    c = float(theta @ st)
    if c <= 0.0:
        raise SingularGram("direction has nonpositive quadratic form")
    u = float(summary.s_zy @ theta)
    sbar = summary.s_zy / sd
    g = st / sd
    z0 = np.abs(sbar - (u / c) * g)
    zmax = float(z0.max()) if p else 0.0
    if not np.isfinite(zmax) or zmax <= 0.0:
        return [()], np.zeros(0), True, True
    lam_max = zmax if config.penalty != "tlp" else config.tlp_tau * zmax
    lambdas = np.geomspace(lam_max, config.lambda_min_ratio * lam_max,
                           config.n_lambda)
    alphas, _, _, monotone, converged = cd_path(
        R, sbar, g, c, u, lambdas, config.penalty_code,
        config.penalty_shape, config.tlp_tau, config.max_iter, config.tol)
    if not np.all(converged):
        bad = int(np.argmin(converged))
        raise NoConvergence(
            f"coordinate descent hit {config.max_iter} sweeps at penalty "
            f"level {lambdas[bad]:.3e} without meeting tol {config.tol:.1e}")
    supports = [()]
    seen = {()}
    for li in range(lambdas.shape[0]):
        sup = tuple(int(j) for j in np.nonzero(alphas[li] != 0.0)[0])
        if sup not in seen:
            seen.add(sup)
            supports.append(sup)
    return supports, lambdas, bool(np.all(monotone)), True


def fit_stage2(summary: SummaryStats, theta: np.ndarray,
               config: Stage2Config = Stage2Config()) -> Stage2Result:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != summary.p:
        raise DimensionMismatch(
            f"direction length {theta.shape[0]} but p={summary.p}")
    if not np.all(np.isfinite(theta)):
        raise DimensionMismatch("direction must be finite")
    p = summary.p
    k_cap = config.k_max if config.k_max is not None else default_k_max(p)
    if config.selection == "exhaustive":
        if p > 15:
            raise ConfigError(
                f"exhaustive subset search limited to p <= 15, got p={p}")
        supports = [tuple(A) for k in range(0, k_cap + 1)
                    for A in itertools.combinations(range(p), k)]
        lambdas = np.zeros(0)
        mono = conv = True
    else:
        supports, lambdas, mono, conv = _path_supports(summary, theta, config)
        supports = [A for A in supports if len(A) <= k_cap]
    if isinstance(config.selection, int):
        supports = [A for A in supports if len(A) <= config.selection]
    refits = []
    last_err = None
    for A in supports:
        try:
            beta, alpha = beta_given_support(summary.s_zz, summary.s_zy,
                                             theta, A)
        except SingularGram as exc:
            last_err = exc
            continue
        rss = mean_rss(summary, beta, theta, alpha)
        refits.append((A, beta, alpha, rss))
    if not refits:
        raise SingularGram(
            f"every candidate refit failed; last error: {last_err}")
    n2 = summary.n2
    if isinstance(config.selection, int):
        keyed = [(rss, len(A), A, beta, alpha)
                 for A, beta, alpha, rss in refits]
        criterion = f"fixed_k={config.selection}"
    else:
        keyed = [(n2 * np.log(rss) + len(A) * np.log(n2), len(A), A, beta, alpha)
                 for A, beta, alpha, rss in refits]
        criterion = "bic" if config.selection == "bic" else "exhaustive_bic"
    keyed.sort(key=lambda t: (t[0], t[1], t[2]))
    score, _, A, beta, alpha = keyed[0]
    return Stage2Result(beta=beta, alpha=alpha, support=A, score=float(score),
                        criterion=criterion, lambdas=lambdas,
                        n_candidates=len(refits), path_monotone=mono,
                        path_converged=conv)


def noise_variance(summary: SummaryStats) -> float:
    """Residual outcome variance after projecting on all instruments.

    Small negative values from roundoff clamp to 1e-12 with a warning;
    anything below -1e-8 is treated as inconsistent input moments.
    """
    try:
        proj = np.linalg.solve(summary.s_zz, summary.s_zy)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(
            f"summary covariance singular: {exc}") from exc
    val = float(summary.s_yy - summary.s_zy @ proj)
    if val < -1e-8:
        raise NegativeVariance(
            f"projected outcome variance {val:.3e} is negative beyond "
            f"roundoff; the summary moments are inconsistent")
    if val < 1e-12:
        warnings.warn(
            f"projected outcome variance {val:.3e} clamped to 1e-12",
            VarianceClampWarning, stacklevel=2)
        val = 1e-12
    return val


@dataclass(frozen=True)
class CausalFit:
    """Joint two-stage fit: direction, effect size, and invalid set.

    theta_hat carries the stage-one normalization (unit quadratic form in
    the stage-one covariance) with its sign chosen so the effect is
    nonnegative. theta_unit / beta_report give the equivalent unit-norm
    parameterization of the same index.
    """

    beta_hat: float
    theta_hat: np.ndarray
    theta_unit: np.ndarray
    beta_report: float
    alpha_hat: np.ndarray
    invalid_set: tuple
    sigma_e_hat: float
    omega_x_hat: float
    n_slices: int
    stage2: Stage2Result
    direction: SirDirection


def fit_2sir(data: StageOneData, summary: SummaryStats, n_slices: int = 10,
             config: Stage2Config = Stage2Config()) -> CausalFit:
    """Two-stage fit from one individual-level and one summary sample."""
    if data.p != summary.p:
        raise DimensionMismatch(
            f"instrument count mismatch: stage one has p={data.p}, "
            f"summary has p={summary.p}")
    cd = center(data)
    direction = fit_direction(cd.z1, cd.x1, n_slices)
    theta = direction.theta
    s2 = fit_stage2(summary, theta, config)
    beta = s2.beta
    if beta < 0.0:
        beta = -beta
        theta = -theta
    sig2 = noise_variance(summary)
    sigma_e = float(np.sqrt(sig2))
    resid_cov = residual_covariance(summary.s_zz, s2.support)
    q = float(theta @ resid_cov @ theta)
    if q <= 1e-12:
        raise DegenerateDenominator(
            f"index variance {q:.3e} after removing the selected invalid "
            f"set is too small to normalize by")
    norm = float(np.linalg.norm(theta))
    return CausalFit(beta_hat=float(beta), theta_hat=theta,
                     theta_unit=theta / norm, beta_report=float(beta * norm),
                     alpha_hat=s2.alpha, invalid_set=s2.support,
                     sigma_e_hat=sigma_e, omega_x_hat=1.0 / q,
                     n_slices=n_slices, stage2=s2, direction=direction)
