import math

import numpy as np
import pytest

from frachardy.evolution import (DIAGNOSTIC_COLUMNS, EvolutionConfig, NonConvergence,
                                 PotentialSpec, StepFailure, evolve, picard_outer, steady_state,
                                 step, weak_residual, initial_state, _problem)
from frachardy.kernel import Params, hardy_constant
from frachardy.radial import RadialFunction, build_grid, lumped_mass

from conftest import cos_bump

P16 = Params(3, 0.5, 1.6)


def bump_on(M, g=3.0):
    G = build_grid(1.0, M, g)
    return G, RadialFunction.from_callable(G, cos_bump())


def rel_l2(G, a, b):
    m = lumped_mass(G, 3)
    return math.sqrt(m @ (a - b) ** 2 / (m @ b ** 2))


class TestPotential:
    def test_kinds(self):
        r = np.array([1e-4, 0.5, 1.0])
        a = PotentialSpec("exact").coefficient(P16, r)
        assert np.allclose(a, r ** -0.8)
        assert np.allclose(PotentialSpec("minimum", 10).coefficient(P16, r), np.minimum(10, a))
        assert np.allclose(PotentialSpec("regularized", 10).coefficient(P16, r),
                           1 / (r ** 0.8 + 0.1))

    def test_invalid(self):
        with pytest.raises(ValueError):
            PotentialSpec("cubic")
        with pytest.raises(ValueError):
            PotentialSpec("minimum", 0)
        with pytest.raises(ValueError):
            EvolutionConfig(safety=1.5)
        with pytest.raises(ValueError):
            EvolutionConfig(tau=0.0)


class TestStep:
    def test_zero_is_fixed_point(self):
        G = build_grid(1.0, 30, 3.0)
        for scheme in ("explicit", "semi_implicit"):
            res = evolve(P16, RadialFunction.zeros(G),
                         EvolutionConfig(scheme=scheme, t_end=0.01, lam=1.0))
            assert not np.any(res.final.values)

    @pytest.mark.parametrize("scheme", ["explicit", "semi_implicit"])
    def test_dissipative_without_potential(self, scheme):
        G, u0 = bump_on(40)
        cfg = EvolutionConfig(scheme=scheme, tau=1e-5)
        prob = _problem(P16, G, cfg)
        s0 = initial_state(prob, u0, cfg)
        s1 = step(P16, s0, cfg, prob)
        assert s1.diagnostics["l2"] < s0.diagnostics["l2"]
        assert np.all(s1.values >= 0)

    def test_huge_tau_is_reduced(self):
        G, u0 = bump_on(30)
        cfg = EvolutionConfig(scheme="explicit", tau=10.0, t_end=0.01)
        res = evolve(P16, u0, cfg)
        assert np.all(np.isfinite(res.final.values))
        assert res.rows[1]["tau"] < 10.0

    def test_fixed_tau_too_large_fails_cleanly(self):
        G, u0 = bump_on(30)
        cfg = EvolutionConfig(scheme="explicit", tau=10.0, t_end=10.0, fixed_tau=True)
        try:
            res = evolve(P16, u0, cfg)
        except StepFailure:
            return
        assert np.all(np.isfinite(res.final.values))


class TestEvolve:
    def test_t_end_zero(self):
        G, u0 = bump_on(30)
        res = evolve(P16, u0, EvolutionConfig(t_end=0.0))
        assert len(res.rows) == 1 and res.final.steps == 0
        assert tuple(res.rows[0]) == DIAGNOSTIC_COLUMNS

    def test_comparison(self):
        G, ub = bump_on(40)
        ua = ub.scaled(0.5)
        cfg = EvolutionConfig(scheme="explicit", tau=1e-5, t_end=0.01,
                              lam=0.5 * hardy_constant(P16))
        fa = evolve(P16, ua, cfg).final.values
        fb = evolve(P16, ub, cfg).final.values
        assert np.all(fa <= fb + 1e-14)

    def test_scheme_agreement(self):
        G, u0 = bump_on(40)
        lam = 0.5 * hardy_constant(P16)
        out = {s: evolve(P16, u0, EvolutionConfig(scheme=s, tau=1e-4, t_end=0.04, lam=lam,
                                                  safety=0.01)).final.values
               for s in ("explicit", "semi_implicit")}
        assert rel_l2(G, out["explicit"], out["semi_implicit"]) <= 0.02

    def test_energy_identity_lambda_zero(self):
        G, u0 = bump_on(100)
        res = evolve(P16, u0, EvolutionConfig(tau=1e-5, t_end=0.01, safety=0.01))
        t, l2, S = res.column("t"), res.column("l2"), res.column("seminorm_p")
        lhs = 0.5 * np.diff(l2 ** 2) / np.diff(t)
        rhs = -0.25 * (S[1:] + S[:-1])
        assert np.max(np.abs(lhs - rhs) / np.abs(rhs)) <= 0.05

    @pytest.mark.slow
    def test_tau_halving_standard_scenario(self):
        G, u0 = bump_on(200)
        lam = 0.5 * hardy_constant(P16)
        l2 = [evolve(P16, u0, EvolutionConfig(tau=tau, t_end=0.02, lam=lam, fixed_tau=True))
              .final.diagnostics["l2"] for tau in (4e-5, 2e-5)]
        assert abs(l2[1] / l2[0] - 1) <= 0.01

    def test_deterministic(self):
        G, u0 = bump_on(40)
        cfg = EvolutionConfig(tau=1e-4, t_end=0.01, lam=1.0)
        a, b = evolve(P16, u0, cfg), evolve(P16, u0, cfg)
        assert np.array_equal(a.final.values, b.final.values) and a.rows == b.rows


class TestPicard:
    def test_single_level_is_plain_decay(self):
        G, u0 = bump_on(40)
        cfg = EvolutionConfig(tau=2e-3, t_end=0.02, lam=0.5 * hardy_constant(P16))
        (final,) = picard_outer(P16, u0, cfg, [4])
        plain = evolve(P16, u0, EvolutionConfig(tau=2e-3, t_end=0.02, fixed_tau=True))
        assert np.allclose(final.values, plain.final.values, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("p, factor", [(1.6, 0.5), (2.5, 0.5), (2.5, 2.0)])
    def test_monotone_in_level(self, p, factor):
        P = Params(3, 0.5, p)
        G, u0 = bump_on(40)
        cfg = EvolutionConfig(tau=2e-3, t_end=0.05, lam=factor * hardy_constant(P))
        finals = picard_outer(P, u0, cfg, [4, 8, 16, 32, 64])
        V = np.array([f.values for f in finals])
        assert np.diff(V, axis=0).min() >= -1e-10

    def test_converges_below_lambda(self):
        G, u0 = bump_on(40)
        cfg = EvolutionConfig(tau=2e-3, t_end=0.05, lam=0.5 * hardy_constant(P16))
        # each level is one lagged sweep, so the fixed point needs many levels
        levels = list(np.logspace(1, 12, 40))
        finals = picard_outer(P16, u0, cfg, levels)
        assert np.max(np.abs(finals[-1].values - finals[-2].values)) <= 1e-6 * np.max(u0.values)

    def test_levels_must_increase(self):
        G, u0 = bump_on(20)
        with pytest.raises(ValueError):
            picard_outer(P16, u0, EvolutionConfig(), [8, 4])


class TestSteadyState:
    def test_positive_limit(self):
        G = build_grid(1.0, 60, 3.0)
        cfg = EvolutionConfig(t_end=1e4, source_q=0.3, lam=0.5 * hardy_constant(P16))
        trace = []
        w = steady_state(P16, G, cfg, trace=trace)
        assert np.all(w.values[:-1] > 0)
        l2 = [r["l2"] for r in trace]
        assert np.all(np.diff(l2) >= -1e-12 * max(l2))
        assert weak_residual(P16, w, cfg) <= 0.02

    def test_requires_small_q(self):
        with pytest.raises(ValueError):
            steady_state(P16, build_grid(1.0, 20, 3.0), EvolutionConfig(source_q=0.9))

    def test_not_stationary(self):
        cfg = EvolutionConfig(t_end=0.01, source_q=0.3)
        with pytest.raises(NonConvergence):
            steady_state(P16, build_grid(1.0, 20, 3.0), cfg)
