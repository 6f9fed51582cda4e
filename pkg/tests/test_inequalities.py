import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frachardy.inequalities import (REPORT_COLUMNS, _solve_supersolution, alge4_recipe,
                                    alge4_terms, check_alge4, check_algg, check_picone,
                                    search_constants_algg, search_constants_alge4,
                                    structured_samples)
from frachardy.kernel import Params
from frachardy.radial import GalerkinOperator, RadialFunction, build_grid, lumped_mass


class TestPowerInequalities:
    @pytest.mark.parametrize("alpha", [0.3, 0.7, 1.0])
    def test_subadditive(self, alpha):
        c1, c2, _, _ = search_constants_algg(1.5, alpha)
        assert c1 == c2 == 1.0

    def test_p2_alpha1_is_an_identity(self):
        # both sides equal (a - b)^2, so c3 = 1 passes with no slack
        rep = check_algg(2.0, 1.0, (1.0, 1.0, 1.0, 1.0), samples=1000)
        assert rep.passed and abs(rep.worst_margin) <= 1e-9

    def test_dense_recheck(self):
        c = search_constants_algg(1.5, 2.0, grid_size=2001)
        assert all(np.isfinite(c)) and c[2] > 0
        rep = check_algg(1.5, 2.0, c, grid_size=20010, samples=100_000, seed=3)
        assert rep.passed and rep.worst_margin >= 0

    def test_c4_only_for_alpha_ge_one(self):
        assert np.isnan(search_constants_algg(1.5, 0.5)[3])

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            search_constants_algg(0.5, 1.0)


class TestProductInequality:
    def test_recipe_arithmetic(self):
        C1, C2 = alge4_recipe(1.5, 1.0)
        assert C1 == pytest.approx(2 ** -0.5) and C2 == pytest.approx(1.0, abs=1e-15)

    def test_diagonal_and_equal_weights(self):
        a = np.linspace(-5, 5, 41)
        b1, b2 = np.meshgrid(np.linspace(0, 10, 21), np.linspace(0, 10, 21))
        lhs, rhs, _ = alge4_terms(1.5, 2.0, 2.0, b1, b2, 0.7, 1.0)
        assert np.all(lhs == 0) and np.all(rhs <= 0)
        lhs, rhs, _ = alge4_terms(1.5, a, 1.0, 1.0, 1.0, 0.7, 1.0)
        assert np.all(lhs >= rhs)

    def test_structured_families_cover_edges(self):
        a1, a2, b1, b2 = structured_samples(1.5)
        assert np.any((b1 == 0) & (b2 == 0))
        assert np.any((a1 == 0) & (a2 == 0))
        assert np.any((a2 < 0) & (a1 > 0))
        assert np.any(b2 > b1) and np.any(b1 > b2)

    @pytest.mark.parametrize("p", [1.1, 1.5, 1.9])
    def test_search_and_validate(self, p):
        C1, C2 = search_constants_alge4(p, samples=100_000, seed=0)
        assert 0 < C1 < 1 <= C2
        rep = check_alge4(p, 100_000, C1, C2, seed=0)
        assert rep.passed and rep.worst_margin >= -1e-12

    def test_spec_grid_is_too_coarse_near_one(self):
        # the best pair on the eps grid fails close to p = 1 even after shrinking C1
        C1, C2 = max((alge4_recipe(1.1, e) for e in np.arange(1, 51) / 10),
                     key=lambda c: c[0] / c[1])
        assert not check_alge4(1.1, 100_000, 0.95 ** 20 * C1, C2).passed

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=2),
           st.lists(st.floats(0, 10), min_size=2, max_size=2),
           st.floats(0.1, 10), st.floats(0.1, 10))
    def test_scale_invariance(self, a, b, c, d):
        p, C1, C2 = 1.5, 0.7, 1.2
        l0, r0, s0 = alge4_terms(p, a[0], a[1], b[0], b[1], C1, C2)
        l1, r1, s1 = alge4_terms(p, c * a[0], c * a[1], d * b[0], d * b[1], C1, C2)
        k = c ** p * d
        assert abs(l1 - k * l0) <= 1e-12 * k * max(s0, 1e-300) + 1e-300
        assert abs(r1 - k * r0) <= 1e-12 * k * max(s0, 1e-300) + 1e-300

    def test_preconditions(self):
        with pytest.raises(ValueError):
            check_alge4(2.5, 10, 0.5, 1.0)
        with pytest.raises(ValueError):
            check_alge4(1.5, 10, 1.2, 1.0)

    def test_report_row_schema(self):
        rep = check_alge4(1.5, 100, 0.5, 1.0, seed=9)
        assert tuple(rep.row()) == REPORT_COLUMNS and rep.row()["seed"] == 9


def _psis(G, seed=0, count=10):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c, w = rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.3)
        out.append(RadialFunction.from_callable(
            G, lambda r, c=c, w=w: np.maximum(0, 1 - ((r - c) / w) ** 2) ** 2 * (r < 0.8)))
    return out


class TestPicone:
    @pytest.mark.parametrize("p", [1.6, 2.5])
    def test_random_psi(self, p):
        P = Params(3, 0.5, p)
        G = build_grid(1.0, 100, 3.0)
        src = RadialFunction.from_callable(G, lambda r: (r < 0.5).astype(float))
        rep = check_picone(P, src, _psis(G))
        assert rep.passed and rep.samples == 10 and rep.worst_margin > 0.05

    def test_psi_equal_w_is_equality(self):
        P = Params(3, 0.5, 1.6)
        G = build_grid(1.0, 100, 3.0)
        src = RadialFunction.from_callable(G, lambda r: (r < 0.5).astype(float))
        op = GalerkinOperator.build(P, G)
        w = _solve_supersolution(op, lumped_mass(G, 3) * src.values)
        rep = check_picone(P, src, [RadialFunction(G, w)])
        assert rep.worst_margin == pytest.approx(0.05, abs=1e-6)

    def test_rejects_zero_source(self):
        P = Params(3, 0.5, 1.6)
        G = build_grid(1.0, 20, 3.0)
        with pytest.raises(ValueError):
            check_picone(P, RadialFunction.zeros(G), [])
