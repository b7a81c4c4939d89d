import numpy as np
import pytest
from scipy import stats

from nof1iv.samplers import (
    SamplerError,
    ar1_log_density,
    sample_ar1_given_obs,
    sample_interval_censored,
    sample_trunc_norm,
    slice_sample,
)


def test_interval_censored_sign_contract():
    rng = np.random.default_rng(0)
    ind = np.array([1.0, 0.0, np.nan] * 500)
    mean = rng.normal(size=ind.size)
    z = sample_interval_censored(rng, mean, 0.7, ind)
    assert (z[ind == 1.0] > 0).all()
    assert (z[ind == 0.0] <= 0).all()


def test_interval_censored_matches_truncnorm_moments():
    rng = np.random.default_rng(1)
    n = 40_000
    z = sample_interval_censored(rng, np.full(n, 0.5), 0.8, np.ones(n))
    oracle = stats.truncnorm(-0.5 / 0.8, np.inf, loc=0.5, scale=0.8)
    assert z.mean() == pytest.approx(oracle.mean(), abs=4 * oracle.std() / np.sqrt(n))
    assert z.std() == pytest.approx(oracle.std(), rel=0.05)


def test_interval_censored_far_upper_tail():
    # mean shifted to +10 but censored below zero: draws hug the boundary
    rng = np.random.default_rng(2)
    n = 20_000
    z = sample_interval_censored(rng, np.full(n, 10.0), 1.0, np.zeros(n))
    assert (z <= 0).all()
    oracle = stats.truncnorm(-np.inf, -10.0, loc=10.0, scale=1.0)
    assert z.mean() == pytest.approx(oracle.mean(), abs=0.01)


def test_interval_censored_extreme_tail_does_not_hang():
    rng = np.random.default_rng(3)
    z = sample_interval_censored(rng, np.full(10, -45.0), 1.0, np.ones(10))
    assert (z > 0).all()


def test_interval_censored_missing_is_unconstrained():
    rng = np.random.default_rng(4)
    n = 60_000
    z = sample_interval_censored(rng, np.full(n, 0.3), 1.2, np.full(n, np.nan))
    assert z.mean() == pytest.approx(0.3, abs=0.02)
    assert z.std() == pytest.approx(1.2, rel=0.02)


def test_trunc_norm_respects_bounds():
    rng = np.random.default_rng(5)
    draws = [sample_trunc_norm(rng, 0.0, 1.0, -4.0, 4.0) for _ in range(2000)]
    assert all(-4.0 <= d <= 4.0 for d in draws)
    oracle = stats.truncnorm(-4, 4)
    assert np.mean(draws) == pytest.approx(oracle.mean(), abs=0.07)


def test_trunc_norm_tail_interval():
    # interval far in the right tail where naive CDF interpolation underflows
    rng = np.random.default_rng(6)
    draws = np.array([sample_trunc_norm(rng, -40.0, 1.0, 0.0, 1.0) for _ in range(500)])
    assert ((draws >= 0.0) & (draws <= 1.0)).all()


def test_trunc_norm_ks_against_scipy():
    rng = np.random.default_rng(7)
    draws = np.array([sample_trunc_norm(rng, 0.7, 0.5, 0.0, 2.0) for _ in range(5000)])
    oracle = stats.truncnorm((0.0 - 0.7) / 0.5, (2.0 - 0.7) / 0.5, loc=0.7, scale=0.5)
    assert stats.kstest(draws, oracle.cdf).statistic < 0.03


def test_slice_sample_recovers_gaussian():
    rng = np.random.default_rng(8)
    x = 0.0
    draws = np.empty(4000)
    for i in range(draws.size):
        x = slice_sample(rng, x, lambda v: -0.5 * (v - 1.0) ** 2, width=0.5)
        draws[i] = x
    assert stats.kstest(draws, stats.norm(loc=1.0).cdf).statistic < 0.03


def test_slice_sample_respects_bounds():
    rng = np.random.default_rng(9)
    x = 0.5
    for _ in range(500):
        x = slice_sample(rng, x, lambda v: 0.0, lower=0.0, upper=1.0)
        assert 0.0 < x < 1.0


def test_slice_sample_rejects_nan_target():
    rng = np.random.default_rng(10)
    with pytest.raises(SamplerError):
        slice_sample(rng, 0.0, lambda v: float("nan"))


def test_ar1_draw_single_site_closed_form():
    # one site: standard Gaussian conjugacy with n_obs observations
    rng = np.random.default_rng(11)
    var_marg, obs_var = 0.5, 0.4
    d_sum = 1.8
    draws = np.array([
        sample_ar1_given_obs(rng, np.array([d_sum]), 2, obs_var, var_marg, 0.7)[0]
        for _ in range(20_000)
    ])
    post_var = 1.0 / (1.0 / var_marg + 2.0 / obs_var)
    post_mean = post_var * d_sum / obs_var
    assert draws.mean() == pytest.approx(post_mean, abs=0.01)
    assert draws.var() == pytest.approx(post_var, rel=0.05)


def _single_site_gibbs_oracle(rng, d_sum, n_obs, obs_var, var_marg, phi, sweeps=4000):
    """Site-by-site Gibbs on the same target; slow but independently derived."""
    n = d_sum.shape[0]
    innov_var = var_marg * (1.0 - phi * phi)
    u = np.zeros(n)
    kept = []
    for it in range(sweeps):
        for k in range(n):
            prec = n_obs / obs_var
            mean_num = d_sum[k] / obs_var
            if k == 0:
                prec += 1.0 / var_marg
                if n > 1:
                    prec += phi * phi / innov_var
                    mean_num += phi * u[1] / innov_var
            else:
                prec += 1.0 / innov_var
                mean_num += phi * u[k - 1] / innov_var
                if k < n - 1:
                    prec += phi * phi / innov_var
                    mean_num += phi * u[k + 1] / innov_var
            u[k] = mean_num / prec + rng.standard_normal() / np.sqrt(prec)
        if it >= 200:
            kept.append(u.copy())
    return np.array(kept)


def test_ar1_draw_matches_single_site_oracle():
    rng = np.random.default_rng(12)
    d_sum = np.array([0.4, -0.2, 0.9, 0.1, -0.6])
    joint = np.array([
        sample_ar1_given_obs(rng, d_sum, 2, 0.5, 0.3, 0.6) for _ in range(8000)
    ])
    oracle = _single_site_gibbs_oracle(np.random.default_rng(13), d_sum, 2, 0.5, 0.3, 0.6)
    np.testing.assert_allclose(joint.mean(axis=0), oracle.mean(axis=0), atol=0.03)
    np.testing.assert_allclose(joint.std(axis=0), oracle.std(axis=0), atol=0.03)
    # lag-1 correlation of the path posterior must agree as well
    j = np.mean(joint[:, 1:] * joint[:, :-1])
    o = np.mean(oracle[:, 1:] * oracle[:, :-1])
    assert j == pytest.approx(o, abs=0.03)


def test_ar1_log_density_matches_multivariate_normal():
    var_marg, phi = 0.7, 0.4
    n = 6
    cov = var_marg * phi ** np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    u = np.array([0.3, -0.1, 0.2, 0.05, -0.4, 0.6])
    expect = stats.multivariate_normal(mean=np.zeros(n), cov=cov).logpdf(u)
    got = ar1_log_density(u, var_marg, phi) - 0.5 * n * np.log(2 * np.pi)
    assert got == pytest.approx(expect, abs=1e-9)
