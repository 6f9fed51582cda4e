import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from frachardy.kernel import Params, hardy_constant
from frachardy.quad import DivergentIntegrand
from frachardy.radial import (GalerkinOperator, RadialFunction, ZeroDenominator, build_grid,
                              e_alpha_seminorm, eval_at, gagliardo, hardy_term, lumped_mass,
                              minimize_rayleigh, nonlocal_op, nonlocal_op_all, rayleigh_quotient,
                              seminorm_general, seminorm_nested)


def hat(c=0.5, w=0.3):
    return lambda r: np.maximum(0.0, 1.0 - np.abs(r - c) / w)


class TestGrid:
    def test_uniform(self):
        assert np.allclose(build_grid(1.0, 8, 1.0).nodes[1::2], [0.25, 0.5, 0.75, 1.0])

    def test_graded(self):
        assert np.allclose(build_grid(1.0, 8, 2.0).nodes[1::2], [0.0625, 0.25, 0.5625, 1.0])
        assert build_grid(1.0, 200, 3.0).nodes[0] == pytest.approx(1.25e-7, rel=1e-12)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            build_grid(1.0, 4, 1.0)

    def test_refine_keeps_nodes(self):
        G = build_grid(1.0, 20, 3.0)
        assert np.allclose(G.refine().nodes[1::2], G.nodes)


class TestEval:
    def test_rules(self):
        G = build_grid(1.0, 10, 2.0)
        u = RadialFunction(G, np.linspace(1.0, 0.0, 10))
        assert eval_at(u, 1.5) == 0.0
        assert eval_at(u, G.nodes[3]) == pytest.approx(u.values[3])
        mid = 0.5 * (G.nodes[0] + G.nodes[1])
        assert eval_at(u, mid) == pytest.approx(0.5 * (u.values[0] + u.values[1]))
        assert eval_at(u, 0.5 * G.nodes[0]) == u.values[0]

    def test_csv_round_trip(self, tmp_path):
        G = build_grid(1.0, 16, 3.0)
        u = RadialFunction.from_callable(G, lambda r: np.exp(-r) * (1 - r))
        u.to_csv(tmp_path / "u.csv")
        text = (tmp_path / "u.csv").read_text()
        assert text.startswith("r,value\n")
        v = RadialFunction.from_csv(tmp_path / "u.csv", G)
        assert np.array_equal(v.values, u.values)


class TestStrongOperator:
    def test_zero(self):
        P = Params(3, 0.3, 2.0)
        u = RadialFunction.zeros(build_grid(1.0, 20, 1.0))
        assert np.all(nonlocal_op_all(P, u) == 0.0)

    def test_homogeneity(self):
        P = Params(3, 0.3, 1.8)
        u = RadialFunction.from_callable(build_grid(1.0, 30, 1.0), hat())
        for j in (5, 12, 20):
            assert nonlocal_op(P, u.scaled(2.0), j) == pytest.approx(
                2 ** 0.8 * nonlocal_op(P, u, j), rel=1e-8)

    def test_kink_needs_ps_below_p_minus_one(self):
        P = Params(3, 0.5, 1.5)
        u = RadialFunction.from_callable(build_grid(1.0, 20, 1.0), hat())
        with pytest.raises(DivergentIntegrand):
            nonlocal_op(P, u, 9)  # apex of the hat at r = 0.5

    def test_shell_oracle_p2(self):
        # for p = 2 the angular integral over spheres |y| = rho is done in
        # closed form: 2 pi / (r rho) int_{|r-rho|}^{r+rho} (u(r) - u(t)) t dt
        s = 0.3
        P = Params(3, s, 2.0)
        G = build_grid(1.0, 40, 1.0)
        u = RadialFunction.from_callable(G, hat(0.5, 0.25))
        knots = [0.25, 0.5, 0.75, 1.0]

        def U(t):
            return float(eval_at(u, t))

        def oracle(r):
            ur = U(r)

            def shell(rho):
                lo, hi = abs(r - rho), r + rho
                pts = [k for k in knots if lo < k < hi] or None
                v = quad(lambda t: (ur - U(t)) * t, lo, hi, points=pts, limit=200,
                         epsabs=1e-13)[0]
                return 2 * np.pi * v / (r * rho) * rho ** (-1 - 2 * s)

            br = sorted({0.0, 1e-3, 1e-2, 5.0, 50.0} | {abs(r - k) for k in knots}
                        | {r + k for k in knots})
            total = sum(quad(shell, a, b, limit=200, epsabs=1e-12)[0]
                        for a, b in zip(br[:-1], br[1:]))
            return total + quad(shell, 50.0, np.inf, limit=200)[0]

        for j in (5, 14, 20, 30):
            assert nonlocal_op(P, u, j) == pytest.approx(oracle(G.nodes[j]), rel=0.01)

    @pytest.mark.parametrize("p", [2.0, 1.8])
    def test_green_identity(self, p):
        P = Params(3, 0.3, p)
        G = build_grid(1.0, 200, 2.0)
        u = RadialFunction.from_callable(G, hat())
        lhs = np.dot(lumped_mass(G, 3), nonlocal_op_all(P, u) * u.values)
        assert lhs == pytest.approx(0.5 * gagliardo(P, u), rel=0.02)


class TestSeminorms:
    def test_zero(self, p15):
        u = RadialFunction.zeros(build_grid(1.0, 20, 2.0))
        assert seminorm_general(p15, u, 1.5, p15.mu) == 0.0
        assert e_alpha_seminorm(p15, u, 0.3) == 0.0
        assert hardy_term(p15, u) == 0.0

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
    def test_scaling(self, c):
        P = Params(3, 0.5, 1.5)
        u = RadialFunction.from_callable(build_grid(1.0, 24, 2.0), hat())
        assert seminorm_general(P, u.scaled(c), 1.5, P.mu) == pytest.approx(
            abs(c) ** 1.5 * seminorm_general(P, u, 1.5, P.mu), rel=1e-10)
        assert hardy_term(P, u.scaled(c), 2.5) == pytest.approx(
            abs(c) ** 2.5 * hardy_term(P, u, 2.5), rel=1e-10)

    def test_nested_reference(self, p15):
        G = build_grid(1.0, 32, 2.0)
        u = RadialFunction.from_callable(G, hat())
        assert seminorm_general(p15, u, 1.5, p15.mu) == pytest.approx(
            seminorm_nested(p15, u, 1.5, p15.mu), rel=1e-3)

    def test_e_alpha_zero_is_gagliardo(self, p15):
        u = RadialFunction.from_callable(build_grid(1.0, 40, 2.0), hat())
        assert e_alpha_seminorm(p15, u, 0.0) == gagliardo(p15, u)
        assert np.isfinite(e_alpha_seminorm(p15, u, -0.4 / 1.5))

    def test_domain_restriction_is_exact(self, p15):
        G = build_grid(1.0, 40, 2.0)
        for c in (0.2, 0.4, 0.5, 0.6, 0.7):
            u = RadialFunction.from_callable(G, hat(c, 0.2))
            assert seminorm_general(p15, u, 1.5, p15.mu, domain="full") == \
                seminorm_general(p15, u, 1.5, p15.mu, domain="D_Omega")

    def test_degenerate_weight_needs_truncation(self, p15):
        u = RadialFunction.from_callable(build_grid(1.0, 20, 2.0), hat())
        with pytest.raises(DivergentIntegrand):
            seminorm_general(p15, u, 1.5, p15.mu, beta=-p15.ps)

    def test_hardy_term_flat_part(self, p15):
        G = build_grid(1.0, 400, 1.0)
        u = RadialFunction.from_callable(G, lambda r: ((r >= 0.3) & (r <= 0.7)).astype(float))
        e = p15.N - p15.ps
        exact = p15.omega_N * (0.7 ** e - 0.3 ** e) / e
        assert hardy_term(p15, u) == pytest.approx(exact, rel=0.01)

    def test_galerkin_matches_pair_rule(self, p15):
        G = build_grid(1.0, 40, 3.0)
        u = RadialFunction.from_callable(G, hat())
        op = GalerkinOperator.build(p15, G)
        assert op.seminorm(u.values) == pytest.approx(gagliardo(p15, u), rel=1e-12)


class TestRayleigh:
    def test_scale_invariant(self, p15):
        u = RadialFunction.from_callable(build_grid(1.0, 60, 3.0), hat())
        assert rayleigh_quotient(p15, u.scaled(7.0)) == pytest.approx(
            rayleigh_quotient(p15, u), rel=1e-12)

    def test_zero_raises(self, p15):
        with pytest.raises(ZeroDenominator):
            rayleigh_quotient(p15, RadialFunction.zeros(build_grid(1.0, 20, 2.0)))

    def test_discrete_hardy_and_concentration(self, p15):
        G = build_grid(1.0, 100, 3.0)
        L = hardy_constant(p15)
        far = rayleigh_quotient(p15, RadialFunction.from_callable(G, hat(0.6, 0.2)))
        near = rayleigh_quotient(p15, RadialFunction.from_callable(
            G, lambda r: np.maximum(0, 1 - r / 0.1)))
        assert near < far
        assert near >= 0.9 * L

    def test_minimizer(self, p15):
        G = build_grid(1.0, 100, 3.0)
        best, u, history = minimize_rayleigh(p15, G, iterations=200, seed=1)
        L = hardy_constant(p15)
        assert L * 0.9 <= best <= 1.15 * L
        assert all(b <= a for a, b in zip(history, history[1:]))
        again = minimize_rayleigh(p15, G, iterations=200, seed=1)
        assert again[0] == best and np.array_equal(again[1].values, u.values)
