"""Seedable generators for the simulation designs.

One flat design record covers the whole family: instrument law (continuous
with identity or AR(1) covariance, or additive two-trial genotypes), index
direction modes, direct-effect patterns including correlated shifts, two
confounding recipes, optional dominance/interaction terms in the exposure
index, and an optional wrong transform on the outcome side.

Generation follows the structural order: draw instruments and confounders,
invert the transform to get the exposure, then build the outcome. Rows
whose index value falls outside the transform's invertible range are
redrawn individually; the retry count is reported with the truth record.
"""

import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import StageOneData, SummaryStats, derived_rng, summarize
from .errors import ConfigError, DomainError

TRANSFORMS = ("linear", "log", "cube_root", "inverse", "piecewise_linear",
              "quadratic")
MISSPECS = ("identity", "exp", "abs", "inverse", "log_abs")

_INV_GUARD = 1e-6
_MAX_RETRIES = 100


@dataclass(frozen=True)
class SimDesign:
    n: int
    p: int
    beta: float
    transform: str
    theta_mode: str = "gaussian"
    weak_frac: float = 0.0
    sigma_mode: str = "identity"
    ar1_rho: float = 0.0
    iv_mode: str = "continuous"
    maf: float = 0.3
    alpha_mode: str = "none"
    alpha_value: float = 0.0
    w_mode: str = "usq_plus_gamma"
    epistasis_lam: Optional[float] = None
    epistasis_pairs: float = 0.0
    misspec: Optional[str] = None

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError(f"need n >= 4 to split, got {self.n}")
        if self.p < 1:
            raise ConfigError(f"need p >= 1, got {self.p}")
        if self.beta < 0.0:
            raise ConfigError(f"effect size must be nonnegative, got {self.beta}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown transform {self.transform!r}")
        if self.theta_mode not in ("gaussian", "uniform", "weak"):
            raise ConfigError(f"unknown theta_mode {self.theta_mode!r}")
        if not 0.0 <= self.weak_frac < 1.0:
            raise ConfigError("weak_frac must lie in [0, 1)")
        if self.sigma_mode not in ("identity", "ar1"):
            raise ConfigError(f"unknown sigma_mode {self.sigma_mode!r}")
        if not -1.0 < self.ar1_rho < 1.0:
            raise ConfigError("ar1_rho must lie in (-1, 1)")
        if self.iv_mode not in ("continuous", "categorical"):
            raise ConfigError(f"unknown iv_mode {self.iv_mode!r}")
        if not 0.0 < self.maf < 1.0:
            raise ConfigError("maf must lie in (0, 1)")
        if self.alpha_mode not in ("none", "first_five", "correlated"):
            raise ConfigError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.w_mode not in ("usq_plus_gamma", "u_plus_gamma"):
            raise ConfigError(f"unknown w_mode {self.w_mode!r}")
        if not 0.0 <= self.epistasis_pairs <= 0.5:
            raise ConfigError("epistasis_pairs must lie in [0, 0.5]")
        if self.epistasis_lam is not None and self.iv_mode != "categorical":
            raise ConfigError("dominance coding needs categorical instruments")
        if self.misspec is not None and self.misspec not in MISSPECS:
            raise ConfigError(f"unknown misspec {self.misspec!r}")

    @property
    def n1(self) -> int:
        return self.n // 2

    @property
    def n2(self) -> int:
        return self.n - self.n // 2


def transform_eval(transform: str, x):
    """Forward map of the exposure transform, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    if transform == "linear":
        return x + 0.0
    if transform == "log":
        if np.any(x <= 0.0):
            raise DomainError("log transform needs positive exposure")
        return np.log(x)
    if transform == "cube_root":
        return np.cbrt(x)
    if transform == "inverse":
        if np.any(x == 0.0):
            raise DomainError("inverse transform undefined at zero")
        return 1.0 / x
    if transform == "piecewise_linear":
        return np.where(x <= 0.0, x, 0.5 * x)
    if transform == "quadratic":
        return x * x
    raise ConfigError(f"unknown transform {transform!r}")


def solve_ok(transform: str, v) -> np.ndarray:
    """Mask of index values where the inverse map is defined and stable."""
    v = np.asarray(v, dtype=np.float64)
    if transform == "inverse":
        return np.abs(v) >= _INV_GUARD
    if transform == "quadratic":
        return v >= 0.0
    return np.ones(v.shape, dtype=bool)


def transform_solve(transform: str, v, rng=None):
    """Inverse map; non-invertible transforms pick uniformly among roots."""
    v = np.asarray(v, dtype=np.float64)
    ok = solve_ok(transform, v)
    if not np.all(ok):
        bad = v[~ok].ravel()[0]
        raise DomainError(
            f"index value {bad:.3e} outside the invertible range of "
            f"{transform}")
    if transform == "linear":
        return v + 0.0
    if transform == "log":
        return np.exp(v)
    if transform == "cube_root":
        return v ** 3
    if transform == "inverse":
        return 1.0 / v
    if transform == "piecewise_linear":
        return np.where(v <= 0.0, v, 2.0 * v)
    if transform == "quadratic":
        if rng is None:
            raise ConfigError("quadratic inverse needs an rng for the root sign")
        sign = np.where(rng.random(v.shape) < 0.5, -1.0, 1.0)
        return sign * np.sqrt(v)
    raise ConfigError(f"unknown transform {transform!r}")


def misspec_eval(misspec: str, x):
    """Wrong outcome-side transform used by the misspecification designs."""
    x = np.asarray(x, dtype=np.float64)
    if misspec == "identity":
        return x + 0.0
    if misspec == "exp":
        return np.exp(x)
    if misspec == "abs":
        return np.abs(x)
    if misspec == "inverse":
        return 1.0 / x
    if misspec == "log_abs":
        return np.log(np.abs(x))
    raise ConfigError(f"unknown misspec {misspec!r}")


def population_sigma(design: SimDesign) -> np.ndarray:
    """Population instrument covariance implied by the design."""
    p = design.p
    if design.iv_mode == "categorical":
        return 2.0 * design.maf * (1.0 - design.maf) * np.eye(p)
    if design.sigma_mode == "ar1":
        idx = np.arange(p)
        return design.ar1_rho ** np.abs(idx[:, None] - idx[None, :])
    return np.eye(p)


def _draw_theta(design: SimDesign, rng) -> np.ndarray:
    p = design.p
    if design.theta_mode == "uniform":
        return np.full(p, p ** -0.5)
    theta = rng.standard_normal(p)
    if design.theta_mode == "weak":
        theta[:int(design.weak_frac * p)] = 0.0
    nrm = np.linalg.norm(theta)
    if nrm == 0.0:
        raise ConfigError("degenerate direction draw; all coordinates zeroed")
    return theta / nrm


def _draw_z(design: SimDesign, rng, size, chol) -> np.ndarray:
    if design.iv_mode == "categorical":
        return rng.binomial(2, design.maf, size=(size, design.p)) \
            .astype(np.float64)
    g = rng.standard_normal((size, design.p))
    return g @ chol.T if chol is not None else g


def generate(design: SimDesign, seed):
    """One replicate: stage-one sample, summary sample, and the truth record.

    The first half of the rows becomes the individual-level sample, kept on
    the raw scale; fitting operations center internally where the method
    requires it, and the transform-ratio estimator needs the raw instrument
    moments (designs whose solution set truncates the index leave the kept
    sample with a nonzero index mean that centering would destroy). The
    second half is reduced to second moments around its own means with the
    outcome second moment normalized to one. The truth record reports effect
    sizes on the normalized-outcome scale, on both the unit-norm direction
    scale (beta0) and the stage-one covariance scale (beta0_sir), plus a
    callable phi0_fn giving the causal transform on the raw exposure axis;
    x_shift and z_shift record the stage-one sample means for reference.
    """
    rng = derived_rng(seed)
    n, p = design.n, design.p
    theta = _draw_theta(design, rng)
    alpha = np.zeros(p)
    if design.alpha_mode == "first_five":
        alpha[:min(5, p)] = design.alpha_value
    elif design.alpha_mode == "correlated":
        mu = np.zeros(p)
        mu[:min(5, p)] = rng.standard_normal(min(5, p))
        alpha = mu.copy()
        theta = theta + mu
    pairs = np.zeros((0, 2), dtype=np.intp)
    delta = np.zeros(0)
    theta_d = None
    if design.epistasis_lam is not None:
        n_pairs = int(design.epistasis_pairs * p)
        all_pairs = np.array(list(itertools.combinations(range(p), 2)),
                             dtype=np.intp)
        if n_pairs > all_pairs.shape[0]:
            raise ConfigError(
                f"{n_pairs} interaction pairs requested but only "
                f"{all_pairs.shape[0]} exist")
        if n_pairs > 0:
            sel = rng.choice(all_pairs.shape[0], size=n_pairs, replace=False)
            pairs = all_pairs[np.sort(sel)]
            delta = rng.normal(0.0, np.sqrt(0.1), size=n_pairs)
        theta_d = design.epistasis_lam * theta

    chol = None
    if design.iv_mode == "continuous" and design.sigma_mode == "ar1" \
            and design.ar1_rho != 0.0:
        chol = np.linalg.cholesky(population_sigma(design))

    def index_of(zblock, ublock, gblock):
        if design.epistasis_lam is not None:
            base = (zblock == 1.0) @ theta + (zblock == 2.0) @ theta_d
            for k in range(pairs.shape[0]):
                base = base + delta[k] * zblock[:, pairs[k, 0]] \
                    * zblock[:, pairs[k, 1]]
        else:
            base = zblock @ theta
        if design.w_mode == "usq_plus_gamma":
            return base + ublock * ublock + gblock
        return base + ublock + gblock

    Z = _draw_z(design, rng, n, chol)
    u = rng.standard_normal(n)
    gam = rng.standard_normal(n)
    v = index_of(Z, u, gam)
    retries = 0
    bad_rows = np.nonzero(~solve_ok(design.transform, v))[0]
    for i in bad_rows:
        for _ in range(_MAX_RETRIES):
            retries += 1
            Z[i] = _draw_z(design, rng, 1, chol)[0]
            u[i] = rng.standard_normal()
            gam[i] = rng.standard_normal()
            v[i] = index_of(Z[i:i + 1], u[i:i + 1], gam[i:i + 1])[0]
            if solve_ok(design.transform, v[i:i + 1])[0]:
                break
        else:
            # exhausted budget: clamp to the nearest solvable index value
            if design.transform == "quadratic":
                v[i] = 0.0
            elif design.transform == "inverse":
                v[i] = math.copysign(_INV_GUARD, v[i] if v[i] != 0.0 else 1.0)
    x = transform_solve(design.transform, v, rng)
    zeta = rng.standard_normal(n)
    y_name = design.misspec if design.misspec is not None else design.transform
    if design.misspec is not None:
        phi_y = misspec_eval(design.misspec, x)
    else:
        phi_y = v  # phi(x) equals the index by construction
    y = design.beta * phi_y + Z @ alpha + u + zeta

    n1 = design.n1
    z1, x1 = Z[:n1], x[:n1]
    z_shift = z1.mean(axis=0)
    x_shift = float(x1.mean())
    d1 = StageOneData(z1, x1)
    z2, y2 = Z[n1:], y[n1:]
    z2c = z2 - z2.mean(axis=0)
    y2c = y2 - y2.mean()
    y_scale = float(np.sqrt(np.mean(y2c * y2c)))
    d2 = summarize(z2c, y2c)

    theta_norm = float(np.linalg.norm(theta))
    theta_unit = theta / theta_norm
    sig_pop = population_sigma(design)
    sir_scale = float(np.sqrt(theta_unit @ sig_pop @ theta_unit))
    beta0 = design.beta * theta_norm / y_scale
    if design.misspec is not None:
        # the outcome transform is not the index transform; report the
        # causal transform of y without the index normalization
        def phi0_fn(t, _name=y_name):
            return misspec_eval(_name, np.asarray(t))
    else:
        def phi0_fn(t, _name=y_name, _nrm=theta_norm):
            return transform_eval(_name, np.asarray(t)) / _nrm
    truth = {
        "theta0": theta,
        "theta_unit0": theta_unit,
        "theta_norm": theta_norm,
        "alpha0": alpha / y_scale,
        "support0": tuple(int(j) for j in np.nonzero(alpha)[0]),
        "beta0": beta0,
        "beta0_sir": beta0 * sir_scale,
        "phi0": y_name,
        "phi0_fn": phi0_fn,
        "y_scale": y_scale,
        "x_shift": x_shift,
        "z_shift": z_shift,
        "retries": retries,
    }
    return d1, d2, truth


def example_design(example: int, transform: Optional[str] = None,
                   beta: float = 0.0, n: Optional[int] = None,
                   p: Optional[int] = None, **overrides) -> SimDesign:
    """Named designs 1-6 with their usual sizes; any field can be overridden."""
    if transform is None:
        transform = "quadratic" if example == 6 else "linear"
    if example == 1:
        base = SimDesign(n=n or 2000, p=p or 10, beta=beta,
                         transform=transform)
    elif example == 2:
        base = SimDesign(n=n or 10000, p=p or 50, beta=beta,
                         transform=transform, sigma_mode="ar1", ar1_rho=0.0,
                         alpha_mode="first_five", alpha_value=1.0)
    elif example == 3:
        base = SimDesign(n=n or 2000, p=p or 10, beta=beta,
                         transform=transform, iv_mode="categorical")
    elif example == 4:
        base = SimDesign(n=n or 5000, p=p or 50, beta=beta,
                         transform=transform, theta_mode="weak",
                         weak_frac=0.1)
    elif example == 5:
        base = SimDesign(n=n or 5000, p=p or 50, beta=beta,
                         transform=transform, iv_mode="categorical",
                         epistasis_lam=0.3, epistasis_pairs=0.1)
    elif example == 6:
        base = SimDesign(n=n or 2000, p=p or 10, beta=beta,
                         transform=transform, misspec="exp")
    else:
        raise ConfigError(f"example must be 1..6, got {example}")
    return replace(base, **overrides) if overrides else base


def transform_study_design(transform: str, n: int = 2000, p: int = 10,
                           beta: float = 1.0, **overrides) -> SimDesign:
    """Transform-recovery study: flat direction, linear-in-u confounding."""
    base = SimDesign(n=n, p=p, beta=beta, transform=transform,
                     theta_mode="uniform", w_mode="u_plus_gamma")
    return replace(base, **overrides) if overrides else base
