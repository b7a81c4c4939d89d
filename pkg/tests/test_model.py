import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from nof1iv.model import (
    CO,
    NCO,
    EstimandSummary,
    ModelSpec,
    MonteCarloConfig,
    Params,
    TrialLayout,
    TrialSeries,
    UnscaledParams,
    estimand_dd,
    estimand_itt,
    estimand_ud,
    event_rate_bar,
    lagged_path,
    log_or,
    rescale,
    summarize_estimand,
    unrescale,
)

PHI = ndtr  # standard normal CDF oracle


def t_scenario_params(rho=0.1, beta2=0.0):
    return Params(alpha0=-0.85, alpha1=1.10, beta0=-1.0, beta1=0.5,
                  beta2=beta2, rho=rho, rho_u=0.3)


class TestLayoutAndSeries:
    def test_layout_total(self):
        assert TrialLayout(6, 7).total == 42

    def test_layout_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            TrialLayout(0, 7)

    def test_series_enforces_constant_r_within_period(self):
        layout = TrialLayout(2, 3)
        r = np.array([1, 1, 0, 0, 0, 0])
        with pytest.raises(ValueError, match="period 1"):
            TrialSeries(layout=layout, r=r, x=np.zeros(6), y=np.zeros(6))

    def test_series_rejects_nonbinary(self):
        layout = TrialLayout(1, 3)
        with pytest.raises(ValueError):
            TrialSeries(layout=layout, r=np.zeros(3, int), x=[0, 2, 1], y=np.zeros(3))

    def test_series_accepts_missing(self):
        layout = TrialLayout(1, 3)
        s = TrialSeries(layout=layout, r=np.zeros(3, int), x=[0, np.nan, 1], y=np.zeros(3))
        assert np.isnan(s.x[1])


class TestRescale:
    def test_identity_case(self):
        p = rescale(UnscaledParams(alpha0=-1.0, sigma_u_sq=0.0))
        assert p.alpha0 == -1.0
        assert p.rho == 0.0

    def test_unit_confounder_variance(self):
        p = rescale(UnscaledParams(alpha0=-1.0, sigma_u_sq=1.0))
        assert p.alpha0 == pytest.approx(-1.0 / math.sqrt(2.0), abs=1e-12)
        assert p.rho == pytest.approx(0.5)

    @pytest.mark.parametrize("sigma_u_sq", [0.0, 0.3, 1.0, 4.2])
    def test_inverse_of_scaling_map(self, sigma_u_sq):
        u = UnscaledParams(beta1=0.5 * math.sqrt(1.0 + sigma_u_sq), sigma_u_sq=sigma_u_sq)
        assert rescale(u).beta1 == pytest.approx(0.5, abs=1e-12)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            UnscaledParams(sigma_u_sq=-0.1)

    @given(
        a0=st.floats(-3, 3), b1=st.floats(-3, 3),
        s2=st.floats(0.0, 8.0), rho_u=st.floats(-0.9, 0.9),
    )
    def test_roundtrip_recovers_unscaled(self, a0, b1, s2, rho_u):
        u = UnscaledParams(alpha0=a0, beta1=b1, sigma_u_sq=s2)
        back = unrescale(rescale(u, rho_u=rho_u))
        assert back.alpha0 == pytest.approx(a0, rel=1e-12, abs=1e-12)
        assert back.beta1 == pytest.approx(b1, rel=1e-12, abs=1e-12)
        assert back.sigma_u_sq == pytest.approx(s2, rel=1e-9, abs=1e-9)


class TestEventRate:
    def test_all_zeros_path(self):
        p = Params(alpha0=0, alpha1=0, beta0=-1.0, beta1=0.5)
        rate = event_rate_bar(p, ModelSpec(NCO), np.zeros(10))
        assert rate == pytest.approx(PHI(-1.0), abs=1e-12)

    def test_all_ones_path(self):
        p = Params(alpha0=0, alpha1=0, beta0=-1.0, beta1=0.5)
        rate = event_rate_bar(p, ModelSpec(NCO), np.ones(10))
        assert rate == pytest.approx(PHI(-0.5), abs=1e-12)

    def test_carryover_path(self):
        p = Params(alpha0=0, alpha1=0, beta0=-1.0, beta1=0.5, beta2=0.2)
        rate = event_rate_bar(p, ModelSpec(CO), np.ones(8), np.ones(8))
        assert rate == pytest.approx(PHI(-0.3), abs=1e-12)

    def test_length_mismatch_raises(self):
        p = Params(alpha0=0, alpha1=0, beta0=-1.0, beta1=0.5, beta2=0.2)
        with pytest.raises(ValueError):
            event_rate_bar(p, ModelSpec(CO), np.ones(8), np.ones(7))

    def test_permutation_invariance_constant_path(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(12, 2))
        p = Params(alpha0=0, alpha1=0, beta0=-0.5, beta1=0.3,
                   alpha_w=[0.1, -0.2], beta_w=[0.1, -0.2])
        perm = rng.permutation(12)
        a = event_rate_bar(p, ModelSpec(NCO), np.ones(12), w=w)
        b = event_rate_bar(p, ModelSpec(NCO), np.ones(12), w=w[perm])
        assert a == pytest.approx(b, abs=1e-12)


class TestLogOr:
    def test_equal_rates(self):
        assert log_or(0.3, 0.3) == 0.0

    def test_paper_value_large_effect(self):
        assert log_or(PHI(-0.5), PHI(-1.0)) == pytest.approx(0.861, abs=5e-4)

    def test_paper_value_carryover(self):
        assert log_or(PHI(-0.3), PHI(-1.0)) == pytest.approx(1.187, abs=1e-3)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.3])
    def test_boundary_rejected(self, bad):
        with pytest.raises(ValueError):
            log_or(bad, 0.5)

    @given(p1=st.floats(1e-6, 1 - 1e-6), p0=st.floats(1e-6, 1 - 1e-6))
    def test_antisymmetry(self, p1, p0):
        assert log_or(p1, p0) == pytest.approx(-log_or(p0, p1), abs=1e-12)


class TestEstimandDD:
    def test_paper_value_nco(self):
        assert estimand_dd(t_scenario_params(), ModelSpec(NCO)) == pytest.approx(0.86, abs=0.005)

    def test_null_effect(self):
        p = Params(alpha0=0, alpha1=0, beta0=-0.7, beta1=0.0)
        assert estimand_dd(p, ModelSpec(NCO)) == 0.0

    def test_paper_value_small_effect(self):
        p = Params(alpha0=-0.85, alpha1=1.10, beta0=-0.25, beta1=0.25, rho=0.1, rho_u=0.3)
        assert estimand_dd(p, ModelSpec(NCO)) == pytest.approx(0.40, abs=0.005)

    @given(b1=st.floats(-2, 2), delta=st.floats(0.01, 1.0), b0=st.floats(-2, 2))
    def test_strictly_increasing_in_beta1(self, b1, delta, b0):
        p_lo = Params(alpha0=0, alpha1=0, beta0=b0, beta1=b1)
        p_hi = Params(alpha0=0, alpha1=0, beta0=b0, beta1=b1 + delta)
        assert estimand_dd(p_hi, ModelSpec(NCO)) > estimand_dd(p_lo, ModelSpec(NCO))


class TestBehaviourEstimands:
    def test_ud_degenerate_selection_equals_dd(self):
        # alpha0 + alpha1 large enough that Phi(.) == 1 in floats
        p = Params(alpha0=2.0, alpha1=8.0, beta0=-1.0, beta1=0.5)
        rng = np.random.default_rng(0)
        ud = estimand_ud(p, ModelSpec(NCO), None, MonteCarloConfig(2000, days=5), rng)
        assert ud == pytest.approx(estimand_dd(p, ModelSpec(NCO)), abs=1e-9)

    def test_ud_plugin_mixture_oracle(self):
        q = PHI(0.25)
        mix = q * PHI(-0.5) + (1 - q) * PHI(-1.0)
        expect = log_or(mix, PHI(-1.0))
        assert expect == pytest.approx(0.561, abs=5e-4)
        rng = np.random.default_rng(1)
        got = estimand_ud(t_scenario_params(), ModelSpec(NCO), None,
                          MonteCarloConfig(120_000, days=1), rng)
        assert got == pytest.approx(expect, abs=0.004)

    def test_ud_null_effect(self):
        p = Params(alpha0=-0.85, alpha1=1.1, beta0=-1.0, beta1=0.0)
        rng = np.random.default_rng(2)
        got = estimand_ud(p, ModelSpec(NCO), None, MonteCarloConfig(200, days=10), rng)
        assert got == pytest.approx(0.0, abs=1e-12)

    def test_itt_plugin_mixture_oracle(self):
        q1, q0 = PHI(0.25), PHI(-0.85)
        mix1 = q1 * PHI(-0.5) + (1 - q1) * PHI(-1.0)
        mix0 = q0 * PHI(-0.5) + (1 - q0) * PHI(-1.0)
        expect = log_or(mix1, mix0)
        assert expect == pytest.approx(0.354, abs=5e-4)
        rng = np.random.default_rng(3)
        got = estimand_itt(t_scenario_params(), ModelSpec(NCO), None,
                           MonteCarloConfig(120_000, days=1), rng)
        assert got == pytest.approx(expect, abs=0.004)

    def test_itt_null_instrument(self):
        p = Params(alpha0=-0.3, alpha1=0.0, beta0=-1.0, beta1=0.5)
        rng = np.random.default_rng(4)
        # identical selection under both arms: same mixture in both rates
        got = estimand_itt(p, ModelSpec(NCO), None, MonteCarloConfig(40_000, days=1), rng)
        assert got == pytest.approx(0.0, abs=0.02)

    def test_zero_samples_rejected(self):
        with pytest.raises(ValueError):
            MonteCarloConfig(samples=0)

    @settings(max_examples=25, deadline=None)
    @given(
        a0=st.floats(-1.5, 0.5), a1=st.floats(0.1, 1.5),
        b0=st.floats(-1.5, 0.0), b1=st.floats(0.05, 1.0),
        seed=st.integers(0, 2**31),
    )
    def test_ordering_itt_ud_dd(self, a0, a1, b0, b1, seed):
        # Monte Carlo noise on the log-odds is well under 0.01 at this sample
        # size, so the slack cannot mask a real ordering violation.
        p = Params(alpha0=a0, alpha1=a1, beta0=b0, beta1=b1)
        spec = ModelSpec(NCO)
        rng = np.random.default_rng(seed)
        mc = MonteCarloConfig(200_000, days=1)
        dd = estimand_dd(p, spec)
        ud = estimand_ud(p, spec, None, mc, rng)
        itt = estimand_itt(p, spec, None, mc, rng)
        slack = 0.02
        assert -slack <= itt <= ud + slack <= dd + 2 * slack


class TestSummarize:
    def test_all_zero_draws(self):
        s = summarize_estimand(np.zeros(100), name="DD")
        assert s.posterior_mean_log_or == 0.0
        assert (s.cri_low, s.cri_high) == (0.0, 0.0)
        assert s.prob_or_gt_1 == 0.0

    def test_prob_counts_strictly_positive(self):
        s = summarize_estimand(np.array([-1.0, 0.0, 1.0, 2.0]))
        assert s.prob_or_gt_1 == 0.5

    def test_normal_quantile_oracle(self):
        rng = np.random.default_rng(5)
        s = summarize_estimand(rng.standard_normal(100_000))
        assert s.cri_low == pytest.approx(-1.96, abs=0.03)
        assert s.cri_high == pytest.approx(1.96, abs=0.03)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize_estimand(np.array([]))

    def test_invalid_summary_rejected(self):
        with pytest.raises(ValueError):
            EstimandSummary("DD", 0.0, 1.0, -1.0, 0.5)


class TestLaggedPath:
    def test_first_day_defaults_to_zero(self):
        np.testing.assert_array_equal(lagged_path(np.array([1.0, 0.0, 1.0])), [0.0, 1.0, 0.0])

    def test_period_boundary_carries_over(self):
        x = np.array([0.0, 1.0, 1.0, 0.0])  # two 2-day periods
        assert lagged_path(x)[2] == 1.0
