import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma as gamma_fn

from ldplab import kernels as K


# Frozen oracles, computed by an independent brute-force space-time
# quadrature (midpoint in s, trapezoid in y and z) of
# int_0^t ds int_w1 int_w2 (G(t-s)*G(t-s)*Gamma)(y-z) dy dz.
BRUTE_HEAT_WHITE_T1_08 = 7.2476643
BRUTE_WAVE_WHITE_T1_08 = 2.5            # exact: int_0^1 (8u^2 - (2/3)u^3 ... ) closed form
BRUTE_HEAT_GAUSS_T1_08 = 12.4828244
BRUTE_HEAT_WHITE_CROSS = 0.0145763      # windows (0,8) and (10,18)
BRUTE_HEAT_GAUSS_COV2 = 0.0540303
BRUTE_WAVE_WHITE_T05_CROSS = 0.0416667  # windows (0,2) and (1,4), t=0.5


class TestGreens:
    def test_heat_is_gaussian_density(self):
        t = 0.7
        xs = np.linspace(-6, 6, 2001)
        vals = K.greens_eval("heat", t, xs)
        assert np.isclose(np.trapezoid(vals, xs), 1.0, atol=1e-8)
        assert np.isclose(K.greens_eval("heat", t, 0.0),
                          1.0 / math.sqrt(2 * math.pi * t))

    def test_wave_half_indicator(self):
        assert K.greens_eval("wave", 2.0, 1.9) == 0.5
        assert K.greens_eval("wave", 2.0, 2.1) == 0.0
        assert K.greens_eval("wave", 2.0, -1.0) == 0.5

    def test_mass(self):
        assert K.greens_mass("heat", 3.0) == 1.0
        assert K.greens_mass("wave", 3.0) == 3.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            K.greens_eval("heat", 0.0, 1.0)
        with pytest.raises(ValueError):
            K.greens_eval("schroedinger", 1.0, 1.0)
        with pytest.raises(ValueError):
            K.greens_mass("wave", -1.0)

    def test_selfconv_matches_numeric_convolution(self):
        u = 0.6
        for kind in ("heat", "wave"):
            for tau in (0.0, 0.3, 1.0):
                pts = sorted({-u, u, tau - u, tau + u})
                num, _ = integrate.quad(
                    lambda y: K.greens_eval(kind, u, y)
                    * K.greens_eval(kind, u, tau - y), -20, 20, limit=200,
                    points=[p for p in pts if -20 < p < 20])
                assert np.isclose(K.greens_selfconv(kind, u, tau), num,
                                  atol=1e-8)

    def test_indicator_smoothed_matches_quadrature(self):
        a, b, u = -0.5, 1.5, 0.4
        for kind in ("heat", "wave"):
            for y in (-1.0, 0.2, 2.0):
                num, _ = integrate.quad(
                    lambda z: K.greens_eval(kind, u, y - z), a, b, limit=200)
                assert np.isclose(K.indicator_smoothed(kind, u, a, b, y), num,
                                  atol=1e-9)


class TestKernels:
    def test_l1_norms(self):
        assert K.kernel_l1(K.WHITE) == 1.0
        assert np.isclose(K.kernel_l1(K.GAUSS), math.sqrt(math.pi), rtol=1e-9)
        assert np.isclose(K.kernel_l1(K.STRETCHED15),
                          2.0 * gamma_fn(1 + 2 / 3), rtol=1e-9)
        assert np.isclose(K.kernel_l1(K.SELFCONV), 1.0, rtol=1e-9)

    def test_eta_eff(self):
        assert K.WHITE.eta_eff == 2.0
        assert K.GAUSS.eta_eff == 2.0
        assert K.STRETCHED15.eta_eff == 1.5

    def test_validation(self):
        with pytest.raises(K.KernelError):
            K.CovarianceKernel(name="bad", shape=lambda x: x, rho=1.0, eta=1.0)
        with pytest.raises(K.KernelError):
            K.CovarianceKernel(name="bad", white=False)
        with pytest.raises(K.KernelError):
            K.WHITE(0.5)
        with pytest.raises(K.KernelError):
            K.kernel_by_name("nope")

    def test_presets_nonnegative_even(self):
        xs = np.linspace(-5, 5, 101)
        for name in ("gauss", "stretched15", "selfconv"):
            k = K.kernel_by_name(name)
            v = k(xs)
            assert np.all(v >= 0)
            assert np.allclose(v, k(-xs))


class TestDecay:
    def test_convolution_of_gaussians(self):
        f = lambda x: np.exp(-np.asarray(x) ** 2)
        xs = np.linspace(0.5, 6.0, 40)
        conv, fit = K.convolution_decay_fit(f, f, xs, (1.0, 1.0, 2.0, 0.0),
                                            (1.0, 1.0, 2.0, 0.0))
        # exact result sqrt(pi/2) exp(-x^2/2)
        assert np.allclose(conv, math.sqrt(math.pi / 2)
                           * np.exp(-xs ** 2 / 2), rtol=1e-6)
        assert fit.bound_respected
        assert 0.4 < fit.rate < 0.6

    def test_grid_must_extend_beyond_tail_threshold(self):
        f = lambda x: np.exp(-np.abs(np.asarray(x)))
        with pytest.raises(ValueError):
            K.convolution_decay_fit(f, f, np.linspace(0, 1, 5),
                                    (1, 1, 1, 2.0), (1, 1, 1, 2.0))

    def test_fit_decay_exponent_recovers(self):
        xs = np.linspace(0.5, 8.0, 60)
        vals = np.exp(-0.7 * xs ** 1.5)
        e, r = K.fit_decay_exponent(xs, vals)
        assert abs(e - 1.5) < 0.05
        assert abs(r - 0.7) < 0.05

    def test_smoothed_kernel_decay(self):
        white = K.smoothed_kernel_decay(K.WHITE, 1.0)
        assert white.exponent == 2.0 and white.rate == 0.5
        gauss = K.smoothed_kernel_decay(K.GAUSS, 1.0)
        assert abs(gauss.exponent - 2.0) / 2.0 < 0.3

    def test_wave_domination_constant(self):
        T = 2.0
        C = K.wave_domination_constant(T)
        for t in (0.1, 0.5, 1.0, 2.0):
            xs = np.linspace(-t + 1e-6, t - 1e-6, 101)
            assert np.all(K.greens_eval("wave", t, xs)
                          <= C * K.greens_eval("heat", t, xs) + 1e-12)


class TestWindowCrossMoment:
    def test_heat_white(self):
        v = K.window_cross_moment("heat", K.WHITE, 1.0, (0, 8), (0, 8))
        assert np.isclose(v, BRUTE_HEAT_WHITE_T1_08, rtol=5e-4)

    def test_wave_white_exact(self):
        v = K.window_cross_moment("wave", K.WHITE, 1.0, (0, 8), (0, 8))
        assert np.isclose(v, BRUTE_WAVE_WHITE_T1_08, rtol=1e-8)

    def test_heat_gauss(self):
        v = K.window_cross_moment("heat", K.GAUSS, 1.0, (0, 8), (0, 8))
        assert np.isclose(v, BRUTE_HEAT_GAUSS_T1_08, rtol=1e-3)

    def test_heat_white_cross(self):
        v = K.window_cross_moment("heat", K.WHITE, 1.0, (0, 8), (10, 18))
        assert np.isclose(v, BRUTE_HEAT_WHITE_CROSS, rtol=2e-3)

    def test_heat_gauss_cross(self):
        v = K.window_cross_moment("heat", K.GAUSS, 1.0, (0, 8), (10, 18))
        assert np.isclose(v, BRUTE_HEAT_GAUSS_COV2, rtol=1e-2)

    def test_wave_white_cross(self):
        v = K.window_cross_moment("wave", K.WHITE, 0.5, (0, 2), (1, 4))
        assert np.isclose(v, BRUTE_WAVE_WHITE_T05_CROSS, rtol=1e-4)

    def test_symmetry_in_windows(self):
        a = K.window_cross_moment("heat", K.WHITE, 0.5, (0, 3), (2, 6))
        b = K.window_cross_moment("heat", K.WHITE, 0.5, (2, 6), (0, 3))
        assert np.isclose(a, b, rtol=1e-9)

    def test_requires_positive_time(self):
        with pytest.raises(ValueError):
            K.window_cross_moment("heat", K.WHITE, 0.0, (0, 1), (0, 1))
