import math

import numpy as np
import pytest

from ldplab import (CgfEstimate, ConfigurationError, ConstructionError, GAUSS,
                    WHITE, biconjugate, build_cgf_table, convexify,
                    convexity_defect, duality_gap, extrapolate_cgf,
                    extrapolate_point, gaussian_reference, legendre_transform,
                    make_test_function, pointwise_min, shifted)
from ldplab.kernels import window_cross_moment


def est(lam, value, ci=0.001, trusted=True, R=8.0):
    return CgfEstimate(lam=(lam,), value=value, ci_halfwidth=ci, ess=1000.0,
                       trusted=trusted, n_paths=1000, R=R)


class TestExtrapolation:
    def test_exact_model_recovered(self):
        R = [8.0, 16.0, 32.0, 64.0]
        vals = [1.0 + 2.0 / r for r in R]
        v, resid, fb = extrapolate_point(R, vals, [0.01] * 4)
        assert v == pytest.approx(1.0, abs=1e-9)
        assert resid < 1e-9 and not fb

    def test_constant_ladder(self):
        v, _, fb = extrapolate_point([8.0, 16.0, 32.0], [0.7, 0.7, 0.7],
                                     [0.01] * 3)
        assert v == pytest.approx(0.7, abs=1e-12) and not fb

    def test_fallback_with_two_points(self):
        v, resid, fb = extrapolate_point([8.0, 16.0], [1.0, 0.9], [0.01] * 2)
        assert fb and v == 0.9 and resid == math.inf

    def test_fallback_on_bad_residual(self):
        R = [8.0, 16.0, 32.0, 64.0]
        vals = [1.0, 0.2, 0.9, 0.4]   # nothing like value + a/R
        v, resid, fb = extrapolate_point(R, vals, [1e-4] * 4)
        assert fb and v == 0.4

    def test_no_trusted_points(self):
        with pytest.raises(ConfigurationError):
            extrapolate_point([8.0, 16.0], [1.0, 1.0], trusted=[False, False])


class TestCgfTable:
    def test_build_and_extrapolate(self):
        by_R = {
            8.0: [est(0.0, 0.0, 0.0), est(0.5, 0.5 + 1.0 / 8)],
            16.0: [est(0.0, 0.0, 0.0), est(0.5, 0.5 + 1.0 / 16)],
            32.0: [est(0.0, 0.0, 0.0), est(0.5, 0.5 + 1.0 / 32)],
        }
        table = extrapolate_cgf(build_cgf_table(by_R))
        assert table.R_values == (8.0, 16.0, 32.0)
        assert table.extrapolated[0] == 0.0 and table.extrap_trusted[0]
        assert table.extrapolated[1] == pytest.approx(0.5, abs=1e-9)
        assert not table.extrap_fallback[1]

    def test_grid_mismatch(self):
        by_R = {8.0: [est(0.0, 0.0), est(0.5, 0.1)],
                16.0: [est(0.0, 0.0), est(0.6, 0.1)]}
        with pytest.raises(ConfigurationError):
            build_cgf_table(by_R)


class TestConvexity:
    def test_defect_of_convex_is_nonneg(self):
        x = np.linspace(-1, 1, 21)
        assert convexity_defect(x, x ** 2) >= 0.0

    def test_defect_detects_concavity(self):
        x = np.linspace(-1, 1, 21)
        assert convexity_defect(x, -x ** 2) < 0.0

    def test_convexify_leaves_convex_alone(self):
        x = np.linspace(-1, 1, 21)
        v = x ** 2
        assert np.allclose(convexify(x, v), v, atol=1e-12)

    def test_convexify_repairs(self):
        x = np.linspace(-1, 1, 31)
        rng = np.random.default_rng(4)
        v = x ** 2 + 0.01 * rng.standard_normal(31)
        out = convexify(x, v)
        assert convexity_defect(x, out) >= -1e-12
        assert np.max(np.abs(out - v)) < 0.05


class TestLegendre:
    def test_quadratic_conjugate(self):
        # Lambda = v lam^2 / 2 has conjugate x^2 / (2 v)
        v_const = 0.8
        lams = np.linspace(-4, 4, 801)
        vals = 0.5 * v_const * lams ** 2
        xs = np.linspace(-2, 2, 81)
        rate = legendre_transform(lams, vals, xs)
        inside = np.abs(xs) <= 2.5  # far from the lambda edge
        assert np.allclose(rate.values[inside], xs[inside] ** 2 / (2 * v_const),
                           atol=2e-3)
        assert not np.any(rate.boundary[np.abs(xs) < 2.0])
        assert rate.argmin[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_cgf_degenerate(self):
        lams = np.linspace(-1, 1, 41)
        rate = legendre_transform(lams, np.zeros(41), np.linspace(-2, 2, 11))
        # I(x) = |x| * lambda_max, flagged at every x != 0
        assert np.allclose(rate.values, np.abs(np.linspace(-2, 2, 11)))
        assert rate.values.min() == 0.0

    def test_boundary_flags(self):
        lams = np.linspace(-0.5, 0.5, 21)
        vals = 0.5 * lams ** 2
        rate = legendre_transform(lams, vals, np.array([5.0]))
        assert rate.boundary[0]

    def test_untrusted_points_excluded(self):
        lams = np.linspace(-1, 1, 21)
        vals = 0.5 * lams ** 2
        vals[-1] = -10.0   # a junk point that would dominate the max
        trusted = np.ones(21, dtype=bool)
        trusted[-1] = False
        rate = legendre_transform(lams, vals, np.array([0.0]), trusted)
        assert rate.values[0] == 0.0

    def test_nonnegative_everywhere(self):
        lams = np.linspace(-1, 1, 21)
        vals = 0.5 * lams ** 2 + 0.01
        rate = legendre_transform(lams, vals, np.linspace(-1, 1, 11))
        assert np.all(rate.values >= 0.0)

    def test_requires_trusted(self):
        with pytest.raises(ConfigurationError):
            legendre_transform([0.1], [0.0], [0.0], trusted=[False])


class TestDuality:
    def setup_method(self):
        self.lams = np.linspace(-2, 2, 201)
        self.vals = 0.25 * self.lams ** 2
        self.xs = np.linspace(-1, 1, 101)
        self.rate = legendre_transform(self.lams, self.vals, self.xs)

    def test_gap_nonnegative(self):
        assert duality_gap(self.lams, self.vals, self.rate) >= -1e-12

    def test_biconjugate_below_cgf(self):
        back = biconjugate(self.rate, self.lams)
        assert np.all(back <= self.vals + 1e-12)

    def test_biconjugate_close_inside(self):
        back = biconjugate(self.rate, self.lams)
        mid = np.abs(self.lams) < 1.0
        tol = 2 * max(np.diff(self.lams)[0] * 1.0, np.diff(self.xs)[0] * 2.0)
        assert np.max(np.abs(back[mid] - self.vals[mid])) <= tol


class TestGaussianReference:
    def test_heat_limit(self):
        ref = gaussian_reference("heat", WHITE, 1.0, 1.0, 8.0)
        assert ref.v == 1.0
        assert ref.cgf(2.0) == pytest.approx(2.0)
        assert ref.rate(2.0) == pytest.approx(2.0)

    def test_wave_limit(self):
        ref = gaussian_reference("wave", WHITE, 1.0, 1.0, 8.0)
        assert ref.v == pytest.approx(1.0 / 3.0)

    def test_scaling_in_sigma(self):
        a = gaussian_reference("heat", GAUSS, 1.0, 0.5, 8.0)
        b = gaussian_reference("heat", GAUSS, 2.0, 0.5, 8.0)
        assert b.v_R == pytest.approx(4.0 * a.v_R, rel=1e-12)

    def test_zero_sigma(self):
        ref = gaussian_reference("heat", WHITE, 0.0, 1.0, 8.0)
        assert ref.v_R == 0.0 and ref.v == 0.0
        assert ref.rate(0.0) == 0.0 and ref.rate(1.0) == np.inf

    def test_finite_window_approaches_limit(self):
        ref = gaussian_reference("heat", WHITE, 1.0, 1.0, 256.0)
        assert ref.v_R == pytest.approx(ref.v, rel=0.02)
        assert ref.v_R < ref.v

    def test_v_R_matches_cross_moment(self):
        ref = gaussian_reference("wave", WHITE, 1.5, 0.5, 4.0)
        direct = 1.5 ** 2 * window_cross_moment(
            "wave", WHITE, 0.5, (0, 4), (0, 4)) / 4.0
        assert ref.v_R == pytest.approx(direct, rel=1e-12)


class TestTestFunctions:
    def test_negsqrt_constants(self):
        g = make_test_function("negsqrt", {}, k=1)
        assert g.lipschitz == 1.0 and g.sup_bound == -1.0
        assert g.m_g == pytest.approx(math.sqrt(2.0), abs=1e-6)
        assert g(np.zeros(3)).shape == (3,)
        assert np.allclose(g(np.zeros(3)), -1.0)

    def test_negsqrt_shifted_center(self):
        g = make_test_function("negsqrt", {"x0": 0.5}, k=1)
        assert g(np.array([0.5])) == pytest.approx(-1.0)

    def test_negconst(self):
        g = make_test_function("negconst", {"c": 2.0}, k=1)
        assert g.m_g == pytest.approx(2.0)
        with pytest.raises(ConstructionError):
            make_test_function("negconst", {"c": 0.0})

    def test_minaffine(self):
        g = make_test_function("minaffine", {}, k=1)
        assert g.sup_bound < 0.0
        x = np.linspace(-3, 3, 7)
        assert np.all(g(x) < 0.0)

    def test_minaffine_slope_bracket(self):
        with pytest.raises(ConstructionError):
            make_test_function("minaffine",
                               {"slopes": [[0.5], [0.7]],
                                "offsets": [-1.0, -1.0]}, k=1)

    def test_unknown_preset(self):
        with pytest.raises(ConstructionError):
            make_test_function("parabola")

    def test_shifted(self):
        g = make_test_function("negsqrt", {}, k=1)
        h = shifted(g, -0.5)
        assert h(np.zeros(1))[0] == pytest.approx(-1.5)
        assert h.m_g == pytest.approx(g.m_g + 0.5)
        with pytest.raises(ConstructionError):
            shifted(g, 2.0)

    def test_pointwise_min(self):
        g1 = make_test_function("negsqrt", {}, k=1)
        g2 = make_test_function("negconst", {"c": 1.2}, k=1)
        h = pointwise_min(g1, g2)
        x = np.linspace(-2, 2, 9)
        assert np.allclose(h(x), np.minimum(g1(x), g2(x)))
        assert h.m_g == max(g1.m_g, g2.m_g)

    def test_two_dimensional(self):
        g = make_test_function("negsqrt", {}, k=2)
        pts = np.zeros((5, 2))
        assert np.allclose(g(pts), -1.0)
        assert g.m_g == pytest.approx(math.sqrt(3.0), abs=1e-4)
