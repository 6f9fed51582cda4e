import math

import numpy as np
import pytest
from scipy.integrate import quad

from frachardy.evolution import EvolutionConfig
from frachardy.experiments import (ReportInconclusive, SUMMARY_COLUMNS, bump,
                                   concave_amplitude_sweep, fit_extinction_exponent,
                                   gronwall_bound, profile_family, run_blowup,
                                   run_degenerate_divergence, run_extinction, run_global_gronwall,
                                   run_improved_hardy, run_no_extinction, run_norm_equivalence,
                                   run_selfsim_supersolution, run_weighted_regime, smooth_step,
                                   weighted_alpha_threshold)
from frachardy.kernel import Params, hardy_constant
from frachardy.radial import RadialFunction, build_grid

from conftest import cos_bump


def with_factor(N, s, p, factor):
    P = Params(N, s, p)
    return P.with_lambda(factor * hardy_constant(P))


def bump_on(M, g=3.0):
    G = build_grid(1.0, M, g)
    return G, RadialFunction.from_callable(G, cos_bump())


class TestHelpers:
    def test_smooth_step(self):
        x = np.linspace(-1, 2, 301)
        y = smooth_step(x)
        assert y[0] == 1.0 and y[-1] == 0.0 and np.all(np.diff(y) <= 0)

    def test_bump_shape(self):
        G = build_grid(4.0, 80, 2.0)
        u = bump(G)
        assert np.all(u.values[G.nodes <= 1.0] == 1.0) and u.values[-1] == 0.0

    def test_profile_family(self, p15):
        fam = profile_family(build_grid(1.0, 40, 3.0), p15)
        assert len(fam) >= 10
        for u in fam.values():
            assert abs(u.values[-1]) <= 1e-12 * np.max(u.values)

    def test_fit_recovers_known_power(self):
        T, k = 0.7, 2.5
        t = np.linspace(0.5, 0.699, 40)
        y = 3.0 * (T - t) ** k
        kf, Tf, ci = fit_extinction_exponent(t, y, t[-1])
        assert kf == pytest.approx(k, rel=1e-6) and Tf == pytest.approx(T, rel=1e-8)
        assert ci[0] <= kf <= ci[1]


class TestExtinction:
    def test_standard_scenario_coarse(self):
        G, u0 = bump_on(60)
        rep = run_extinction(with_factor(3, 0.5, 1.6, 0.5), u0, EvolutionConfig(t_end=50.0))
        assert rep.detected and rep.monotone_decay and rep.exponent_ok
        assert rep.fit_samples >= 8 and rep.T_ext > 0
        assert rep.exponent_ci[0] < rep.fitted_exponent < rep.exponent_ci[1]

    def test_zero_data(self):
        G = build_grid(1.0, 20, 3.0)
        rep = run_extinction(Params(3, 0.5, 1.6), RadialFunction.zeros(G), EvolutionConfig())
        assert rep.detected and rep.T_ext == 0.0 and rep.passed

    def test_low_p_case(self):
        G, u0 = bump_on(100)
        P = with_factor(3, 0.5, 1.4, 0.1)
        assert P.nu_plus_1 == pytest.approx(18 / 7)
        rep = run_extinction(P, u0, EvolutionConfig(t_end=50.0), norm="lnu")
        assert rep.detected and rep.monotone_decay
        assert rep.fitted_exponent == pytest.approx(1 / 0.6, rel=0.2)

    def test_inconclusive(self):
        G, u0 = bump_on(30)
        with pytest.warns(ReportInconclusive):
            rep = run_extinction(with_factor(3, 0.5, 1.6, 0.5), u0, EvolutionConfig(t_end=1e-3))
        assert not rep.detected and rep.T_ext is None and not rep.passed

    def test_concave_sweep(self):
        G, u0 = bump_on(40)
        P = with_factor(3, 0.5, 1.6, 0.5)
        sweep = concave_amplitude_sweep(P, u0, EvolutionConfig(t_end=50.0, source_q=0.8))
        assert len(sweep.rows()) == 3
        with pytest.raises(ValueError):
            concave_amplitude_sweep(P, u0, EvolutionConfig(source_q=0.3))


class TestBlowup:
    def test_control_does_not_flag(self):
        G, u0 = bump_on(40)
        rep = run_blowup(with_factor(3, 0.5, 2.5, 0.5), u0, [4, 8, 16, 32, 64])
        assert rep.monotone and not rep.blowup_flag
        assert rep.far_values[-1] / rep.far_values[-2] < 1.05

    def test_rows_schema(self):
        G, u0 = bump_on(20)
        rep = run_blowup(with_factor(3, 0.5, 2.5, 0.5), u0, [4, 8],
                         config=EvolutionConfig(t_end=0.1), probe=(None, 0.1))
        assert [set(r) for r in rep.rows()] == [{"n", "r0", "t0", "value", "ratio",
                                                 "far_value"}] * 2
        assert math.isnan(rep.rows()[0]["ratio"])

    def test_levels_increasing(self):
        G, u0 = bump_on(20)
        with pytest.raises(ValueError):
            run_blowup(with_factor(3, 0.5, 2.5, 2.0), u0, [8, 4])


class TestSupersolution:
    def test_domination(self):
        G = build_grid(1.0, 100, 3.0)
        P = with_factor(3, 0.5, 1.55, 1.5)
        assert P.p_crit_low < P.p < P.p_crit_mid
        rep = run_selfsim_supersolution(P, EvolutionConfig(tau=1e-5, t_end=0.02), G)
        assert rep.dominated and rep.q_growth <= 10 and rep.passed
        assert rep.q_values == pytest.approx([0.5 * (P.p2 + 1), 0.9 * P.p2])


class TestSpaces:
    def test_norm_equivalence(self, p15):
        reps = run_norm_equivalence(p15, [-0.3, 0.0, 0.2], build_grid(1.0, 100, 3.0))
        for rep in reps:
            assert len(rep.pairs) >= 10 and rep.passed
            assert 0 < rep.ratio_min <= rep.ratio_max < math.inf
        assert reps[1].ratio_min == reps[1].ratio_max == 1.0

    def test_out_of_range_beta(self, p15):
        with pytest.raises(ValueError):
            run_norm_equivalence(p15, [-0.8], build_grid(1.0, 20, 3.0))

    def test_degenerate_log_signature(self, p15):
        rep = run_degenerate_divergence(p15, -p15.ps)
        assert rep.log_signature == pytest.approx(1.0, abs=0.3)
        assert all(b > a for a, b in zip(rep.values, rep.values[1:]))

    def test_more_degenerate_grows_faster(self, p15):
        rep = run_degenerate_divergence(p15, -p15.ps - 0.5)
        assert min(rep.ratios) >= 2 and rep.diverging

    def test_integrable_tail_converges(self, p15):
        # the tail decays like L^-ps, so one decade beyond 1000 is needed for 1%
        rep = run_degenerate_divergence(p15, 0.0, L_values=(10.0, 100.0, 1000.0, 1e4))
        inc = np.diff(rep.values)
        assert inc[0] / inc[1] == pytest.approx(10 ** p15.ps, rel=0.05)
        assert rep.values[-1] / rep.values[-2] - 1 <= 0.01

    def test_improved_hardy(self, p15):
        P = p15.with_lambda(hardy_constant(p15))
        rep = run_improved_hardy(P, [1.1, 1.3, 1.45], build_grid(1.0, 100, 3.0))
        assert rep.passed
        with pytest.raises(ValueError):
            run_improved_hardy(P, [1.6], build_grid(1.0, 20, 3.0))


class TestGronwall:
    def test_low_p_above_lambda(self):
        G, u0 = bump_on(60)
        rep = run_global_gronwall(with_factor(3, 0.5, 1.3, 2.0), u0, EvolutionConfig(t_end=1.0))
        assert rep.passed and rep.margin >= 0

    def test_zero_data(self):
        G = build_grid(1.0, 40, 3.0)
        rep = run_global_gronwall(with_factor(3, 0.5, 1.3, 2.0), RadialFunction.zeros(G),
                                  EvolutionConfig(t_end=0.1))
        assert rep.passed and np.all(rep.l2_sq == 0)

    def test_lambda_zero_is_slack(self):
        G, u0 = bump_on(40)
        rep = run_global_gronwall(Params(3, 0.5, 1.3), u0, EvolutionConfig(t_end=0.05))
        assert np.all(np.diff(rep.l2_sq) <= 0) and rep.passed

    def test_bound_closed_forms(self):
        P = with_factor(3, 0.5, 1.3, 2.0)
        a = P.lam * P.p / 2
        e = P.N - 1 - 2 * P.ps / (2 - P.p)
        c = P.lam * (2 - P.p) / 2 * P.omega_N / (e + 1)

        def beta(s):
            return 2.0 + c * s

        T = 0.5
        spec, std = gronwall_bound(P, 2.0, 1.0, T)
        assert spec == pytest.approx(beta(T) + quad(lambda s: beta(s) * np.exp(a * s), 0, T)[0],
                                     rel=1e-10)
        assert std == pytest.approx(
            beta(T) + quad(lambda s: a * beta(s) * np.exp(a * (T - s)), 0, T)[0], rel=1e-10)


class TestNoExtinction:
    def test_positive_and_monotone(self):
        G = build_grid(1.0, 60, 3.0)
        P = with_factor(3, 0.5, 1.6, 0.5)
        rep = run_no_extinction(P, EvolutionConfig(t_end=1e4, source_q=0.3), G)
        assert rep.passed and rep.positive_after and rep.monotone and rep.residual <= 0.02


class TestWeightedRegime:
    def test_bounded(self):
        G, u0 = bump_on(60)
        P = with_factor(3, 0.5, 1.8, 1.5)
        assert weighted_alpha_threshold(P) == pytest.approx(1 / 0.2 - 3 / 1.8)
        rep = run_weighted_regime(P, u0, EvolutionConfig(t_end=0.1))
        assert rep.bounded


def test_summary_rows_have_schema(p15):
    rep = run_degenerate_divergence(p15, -p15.ps - 0.5)
    assert tuple(rep.summary()) == SUMMARY_COLUMNS
