"""Sliced inverse regression for the exposure index direction.

Stage one works only with the individual-level sample: slice the rows by
exposure rank, compare the between-slice spread of the instrument means
against the overall instrument covariance, and keep the top generalized
eigenvector. The direction is identified up to sign and scale; the scale
convention here is theta' Sigma theta = 1 with the largest-magnitude
coordinate positive.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadSliceCount, DegenerateSpectrumWarning, DimensionMismatch, \
    SingularCovariance

JITTER_REL = 1e-8
SPECTRUM_GAP_TOL = 1e-10


def slice_quotas(n: int, n_slices: int) -> np.ndarray:
    """Equal-frequency slice sizes; the remainder lands on the lowest slices."""
    if n_slices < 2 or 2 * n_slices > n:
        raise BadSliceCount(
            f"need 2 <= n_slices <= n/2, got n_slices={n_slices} with n={n}")
    base, rem = divmod(n, n_slices)
    q = np.full(n_slices, base, dtype=np.int64)
    q[:rem] += 1
    return q


@dataclass(frozen=True)
class SlicePartition:
    """Row order and per-slice sizes for an exposure-ranked partition."""

    order: np.ndarray
    quotas: np.ndarray

    @property
    def n(self) -> int:
        return self.order.shape[0]

    @property
    def n_slices(self) -> int:
        return self.quotas.shape[0]

    def slice_rows(self, s: int) -> np.ndarray:
        lo = int(np.sum(self.quotas[:s]))
        return self.order[lo:lo + self.quotas[s]]


def slice_partition(x: np.ndarray, n_slices: int) -> SlicePartition:
    x = np.asarray(x, dtype=np.float64).ravel()
    quotas = slice_quotas(x.shape[0], n_slices)
    order = np.argsort(x, kind="stable")
    return SlicePartition(order=order, quotas=quotas)


@dataclass(frozen=True)
class SirMoments:
    """Within-sample covariance and between-slice moment of the instruments."""

    sigma: np.ndarray
    gamma: np.ndarray
    mean: np.ndarray
    quotas: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def n_slices(self) -> int:
        return self.quotas.shape[0]


def sir_moments(z: np.ndarray, x: np.ndarray, n_slices: int = 10) -> SirMoments:
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    if z.ndim != 2:
        raise DimensionMismatch(f"instrument block must be 2-d, got {z.ndim}-d")
    n, p = z.shape
    if x.shape[0] != n:
        raise DimensionMismatch(
            f"exposure length {x.shape[0]} does not match {n} instrument rows")
    part = slice_partition(x, n_slices)
    mu = z.mean(axis=0)
    zc = z - mu
    sigma = zc.T @ zc / n
    gamma = np.zeros((p, p))
    lo = 0
    for s in range(part.n_slices):
        q = int(part.quotas[s])
        zbar = zc[part.order[lo:lo + q]].mean(axis=0)
        gamma += (q / n) * np.outer(zbar, zbar)
        lo += q
    return SirMoments(sigma=sigma, gamma=gamma, mean=mu, quotas=part.quotas, n=n)


@dataclass(frozen=True)
class SirDirection:
    theta: np.ndarray
    eigenvalues: np.ndarray
    jitter: float


def sir_direction(moments: SirMoments, jitter_rel: float = JITTER_REL) -> SirDirection:
    """Top generalized eigenvector of (gamma, sigma), sigma-normalized.

    Solved by whitening: with sigma = L L', the problem becomes the ordinary
    symmetric eigenproblem for L^-1 gamma L^-T and theta = L^-T v. A ridge
    eps = jitter_rel * tr(sigma)/p is added when the smallest eigenvalue of
    sigma falls below eps; if that cannot restore positive definiteness the
    covariance is reported as singular.
    """
    sigma = 0.5 * (moments.sigma + moments.sigma.T)
    gamma = 0.5 * (moments.gamma + moments.gamma.T)
    p = sigma.shape[0]
    eps = jitter_rel * np.trace(sigma) / p
    evmin = float(np.linalg.eigvalsh(sigma)[0])
    jitter = 0.0
    if evmin < eps:
        if evmin + eps <= 0.0:
            raise SingularCovariance(
                f"instrument covariance min eigenvalue {evmin:.3e} "
                f"not repairable by ridge {eps:.3e}")
        sigma = sigma + eps * np.eye(p)
        jitter = eps
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"covariance factorization failed: {exc}") from exc
    W = np.linalg.solve(L, np.linalg.solve(L, gamma).T)
    W = 0.5 * (W + W.T)
    evals, evecs = np.linalg.eigh(W)
    if p >= 2:
        top = evals[-1]
        gap = (top - evals[-2]) / max(abs(top), 1e-300)
        if gap < SPECTRUM_GAP_TOL:
            warnings.warn(
                f"top two between-slice eigenvalues nearly tied "
                f"(relative gap {gap:.3e}); direction is unstable",
                DegenerateSpectrumWarning, stacklevel=2)
    theta = np.linalg.solve(L.T, evecs[:, -1])
    jmax = int(np.argmax(np.abs(theta)))
    if theta[jmax] < 0.0:
        theta = -theta
    return SirDirection(theta=theta, eigenvalues=evals, jitter=jitter)


def fit_direction(z: np.ndarray, x: np.ndarray, n_slices: int = 10,
                  jitter_rel: float = JITTER_REL) -> SirDirection:
    """Moments plus eigensolve in one call."""
    return sir_direction(sir_moments(z, x, n_slices), jitter_rel=jitter_rel)
