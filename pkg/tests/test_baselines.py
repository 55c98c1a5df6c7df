"""Comparator estimators: least-squares stages and the power transform."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from nliv import StageOneData, SummaryStats, derived_rng, summarize
from nliv.baselines import _yj_apply, baseline_interval, baseline_test, \
    fit_2sls, fit_pt2sls, yeo_johnson
from nliv.errors import DegenerateDenominator, DimensionMismatch
from tests_support import linear_index_sample, split_sample


def test_2sls_closed_form_oracle():
    """Hand-computed moment formulas reproduce the fit exactly."""
    for seed in range(5):
        z, x, y, _ = linear_index_sample(seed, 800, 4, 0.4)
        d1, d2 = split_sample(z, x, y)
        beta, se = fit_2sls(d1, d2)
        zc = d1.z1 - d1.z1.mean(axis=0)
        xc = d1.x1 - d1.x1.mean()
        sig = zc.T @ zc / d1.n1
        gamma = np.linalg.solve(sig, zc.T @ xc / d1.n1)
        denom = float(gamma @ d2.s_zz @ gamma)
        want_beta = float(gamma @ d2.s_zy) / denom
        s2 = float(d2.s_yy - 2 * want_beta * (gamma @ d2.s_zy)
                   + want_beta ** 2 * denom)
        want_se = math.sqrt(max(s2, 0.0) / (d2.n2 * denom))
        assert beta == pytest.approx(want_beta, rel=1e-10)
        assert se == pytest.approx(want_se, rel=1e-10)


def test_2sls_recovers_linear_effect():
    """On a noiseless linear design the estimate hits the target scale."""
    rng = derived_rng(70)
    n, p = 4000, 3
    gamma = np.array([1.0, -0.5, 0.25])
    z = rng.standard_normal((n, p))
    x = z @ gamma
    beta0 = 0.7
    y = beta0 * x
    d1, d2 = split_sample(z, x, y)
    # summarize rescales the outcome by its root second moment
    y2 = y[n // 2:]
    scale = float(np.sqrt(np.mean((y2 - y2.mean()) ** 2)))
    beta, se = fit_2sls(d1, d2)
    assert beta == pytest.approx(beta0 / scale, rel=1e-6)
    assert se < 1e-6


def test_2sls_degenerate_instruments():
    rng = derived_rng(71)
    z = rng.standard_normal((200, 3))
    x = rng.standard_normal(200) * 1e-12  # exposure carries no signal
    d2 = summarize(z - z.mean(axis=0), rng.standard_normal(200))
    with pytest.raises(DegenerateDenominator):
        fit_2sls(StageOneData(z, x), d2)


def test_2sls_dimension_mismatch():
    rng = derived_rng(72)
    z = rng.standard_normal((100, 3))
    d2 = summarize(rng.standard_normal((100, 2)), rng.standard_normal(100))
    with pytest.raises(DimensionMismatch):
        fit_2sls(StageOneData(z, rng.standard_normal(100)), d2)


def test_yj_identity_at_lambda_one(rng):
    x = rng.standard_normal(50)
    assert np.allclose(_yj_apply(x, 1.0), x, rtol=0, atol=1e-14)


def test_yj_log_branches():
    x = np.array([0.5, 2.0])
    assert np.allclose(_yj_apply(x, 0.0), np.log1p(x))
    xn = np.array([-0.5, -2.0])
    assert np.allclose(_yj_apply(xn, 2.0), -np.log1p(-xn))


def test_yj_branch_continuity():
    rng = derived_rng(73)
    x = rng.standard_normal(40)
    near0 = _yj_apply(x, 1e-9)
    at0 = _yj_apply(x, 0.0)
    assert np.allclose(near0, at0, atol=1e-7)
    near2 = _yj_apply(x, 2.0 - 1e-9)
    at2 = _yj_apply(x, 2.0)
    assert np.allclose(near2, at2, atol=1e-7)


def test_yj_monotone(rng):
    x = np.sort(rng.standard_normal(100))
    for lam in (-4.0, -1.0, 0.0, 0.7, 2.0, 4.5):
        t = _yj_apply(x, lam)
        assert np.all(np.diff(t) > 0)


def test_yj_mle_near_one_for_normal_data():
    x = derived_rng(74).standard_normal(4000)
    t, fit = yeo_johnson(x)
    assert 0.8 <= fit.lam <= 1.2
    assert abs(t.mean()) < 1e-12


def test_yj_gaussianizes_lognormal():
    rng = derived_rng(75)
    x = np.exp(rng.standard_normal(4000) * 0.8)
    t, fit = yeo_johnson(x)
    skew = float(np.mean((t - t.mean()) ** 3)) / float(np.std(t)) ** 3
    assert abs(skew) < 0.15
    assert fit.lam < 0.6  # strong concave shape needed for right skew


def test_yj_mle_beats_neighbors():
    """Golden-section maximum dominates nearby shape values."""
    from nliv.baselines import _yj_loglik

    x = np.exp(derived_rng(76).standard_normal(800) * 0.5)
    _, fit = yeo_johnson(x)
    for off in (-0.05, 0.05):
        assert _yj_loglik(x, fit.lam + off) <= fit.loglik + 1e-6


def test_pt2sls_runs_on_skewed_exposure():
    rng = derived_rng(77)
    n, p = 2000, 4
    theta = np.array([0.8, -0.2, 0.4, 0.1])
    z = rng.standard_normal((n, p))
    x = np.exp(z @ theta + 0.3 * rng.standard_normal(n))
    y = np.log(x) * 0.5 + 0.5 * rng.standard_normal(n)
    d1, d2 = split_sample(z, x, y)
    beta, se = fit_pt2sls(d1, d2)
    assert np.isfinite(beta) and se > 0


def test_baseline_test_formula():
    res = baseline_test(0.3, 0.1, "2SLS")
    assert res.statistic == pytest.approx(3.0)
    assert res.p_value == pytest.approx(2 * norm.sf(3.0), rel=1e-12)
    assert res.method == "2SLS"
    neg = baseline_test(-0.3, 0.1, "2SLS")
    assert neg.statistic == pytest.approx(3.0)
    with pytest.raises(DegenerateDenominator):
        baseline_test(0.3, 0.0, "2SLS")


def test_baseline_interval_truncation():
    ci = baseline_interval(0.1, 0.2, level=0.95)
    zq = norm.ppf(0.975)
    assert ci.lower == 0.0  # raw lower end is negative, clipped at zero
    assert ci.upper == pytest.approx(0.1 + zq * 0.2, rel=1e-12)
    assert ci.level == 0.95
    assert ci.monte_carlo_size == 0
    wide = baseline_interval(2.0, 0.1, level=0.8)
    zq8 = norm.ppf(0.9)
    assert wide.lower == pytest.approx(2.0 - zq8 * 0.1, rel=1e-12)
