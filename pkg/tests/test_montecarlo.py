import math

import numpy as np
import pytest

from ldplab import (ConfigurationError, EnsembleConfig, EquationSpec,
                    ExpMomentAccumulator, GridConfig, MergeError, TimePoints,
                    WHITE, estimate_cgf, estimate_gfunctional,
                    exponential_tightness_check, log_mean_exp,
                    make_test_function, run_ensemble, run_window_samples,
                    sigma_const)
from ldplab.kernels import window_cross_moment
from ldplab.montecarlo import merge
from ldplab.noise import StatisticsError


def make_grid(dx=0.1, dt=0.005, T=0.25, R_max=4.0, pad=4.0):
    return GridConfig(dx=dx, dt=dt, T=T, R_max=R_max, pad=pad)


def heat_eq():
    return EquationSpec(kind="heat", sigma=sigma_const(1.0), c_h=0.0)


class TestLogMeanExp:
    def test_constant_exact(self):
        assert log_mean_exp([3.7, 3.7, 3.7]) == 3.7
        assert log_mean_exp([-1000.0] * 5) == -1000.0

    def test_two_values(self):
        assert log_mean_exp([0.0, math.log(3.0)]) == pytest.approx(
            math.log(2.0), abs=1e-14)

    def test_normal_sample(self):
        x = np.random.default_rng(0).standard_normal(10 ** 6)
        # E exp(Z) = e^{1/2}
        assert log_mean_exp(x) == pytest.approx(0.5, abs=0.01)

    def test_errors(self):
        with pytest.raises(StatisticsError):
            log_mean_exp([])
        with pytest.raises(StatisticsError):
            log_mean_exp([0.0, np.inf])


class TestAccumulator:
    def test_single_add_matches_direct(self):
        x = np.random.default_rng(1).standard_normal(500)
        acc = ExpMomentAccumulator(context=("a",)).add(x)
        assert acc.log_mean_exp() == pytest.approx(log_mean_exp(x), rel=1e-14)

    def test_merge_commutes_and_matches(self):
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal(300), rng.standard_normal(200) + 5.0
        a = ExpMomentAccumulator(context=("c",)).add(x)
        b = ExpMomentAccumulator(context=("c",)).add(y)
        direct = log_mean_exp(np.concatenate([x, y]))
        assert merge(a, b).log_mean_exp() == pytest.approx(direct, rel=1e-12)
        assert merge(b, a).log_mean_exp() == pytest.approx(direct, rel=1e-12)

    def test_tree_vs_sequential(self):
        rng = np.random.default_rng(3)
        chunks = [rng.standard_normal(100) * (i + 1) for i in range(8)]
        seq = ExpMomentAccumulator(context=("t",))
        for c in chunks:
            seq = seq.add(c)
        parts = [ExpMomentAccumulator(context=("t",)).add(c) for c in chunks]
        while len(parts) > 1:
            parts = [merge(parts[i], parts[i + 1])
                     for i in range(0, len(parts), 2)]
        assert parts[0].log_mean_exp() == pytest.approx(
            seq.log_mean_exp(), rel=1e-12)

    def test_context_mismatch(self):
        a = ExpMomentAccumulator(context=("x",)).add([0.0])
        b = ExpMomentAccumulator(context=("y",)).add([0.0])
        with pytest.raises(MergeError):
            merge(a, b)

    def test_empty(self):
        with pytest.raises(StatisticsError):
            ExpMomentAccumulator().log_mean_exp()


class TestEnsembleConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            EnsembleConfig(n_paths=10, seed=0, R_ladder=(1.0, 2.0))
        with pytest.raises(ConfigurationError):
            EnsembleConfig(n_paths=100, seed=0, R_ladder=(2.0, 1.0))
        with pytest.raises(ConfigurationError):
            EnsembleConfig(n_paths=100, seed=0, R_ladder=(1.0,), batch_count=4)


@pytest.fixture(scope="module")
def small_samples():
    """(n, 1) heat window samples reused by several tests."""
    g = make_grid()
    f = run_window_samples(heat_eq(), g, WHITE, seed=31, n_paths=4000,
                           observations=[(0.25, 0.0, 4.0)])
    v = window_cross_moment("heat", WHITE, 0.25, (0, 4), (0, 4))
    return f, v


class TestRunWindowSamples:
    def test_deterministic(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=2.0, pad=2.0)
        obs = [(0.25, 0.0, 2.0)]
        a = run_window_samples(heat_eq(), g, WHITE, 1, 200, obs)
        b = run_window_samples(heat_eq(), g, WHITE, 1, 200, obs)
        assert np.array_equal(a, b)

    def test_batch_and_thread_independence(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=2.0, pad=2.0)
        obs = [(0.25, 0.0, 2.0), (0.1, 0.5, 1.5)]
        base = run_window_samples(heat_eq(), g, WHITE, 1, 300, obs,
                                  batch_size=256)
        small = run_window_samples(heat_eq(), g, WHITE, 1, 300, obs,
                                   batch_size=37)
        threaded = run_window_samples(heat_eq(), g, WHITE, 1, 300, obs,
                                      batch_size=64, n_threads=3)
        assert np.array_equal(base, small)
        assert np.array_equal(base, threaded)

    def test_path_offset_extends(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=2.0, pad=2.0)
        obs = [(0.25, 0.0, 2.0)]
        whole = run_window_samples(heat_eq(), g, WHITE, 1, 300, obs)
        tail = run_window_samples(heat_eq(), g, WHITE, 1, 100, obs,
                                  path_offset=200)
        assert np.array_equal(whole[200:], tail)

    def test_zero_sigma_gives_zero(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=2.0, pad=2.0)
        eq = EquationSpec(kind="heat", sigma=sigma_const(0.0), c_h=1.0)
        f = run_window_samples(eq, g, WHITE, 1, 150, [(0.25, 0.0, 2.0)])
        assert np.all(f == 0.0)


class TestRunEnsemble:
    def test_shape_and_consistency(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=4.0, pad=3.0)
        cfg = EnsembleConfig(n_paths=200, seed=5, R_ladder=(2.0, 4.0))
        out = run_ensemble(heat_eq(), g, WHITE, TimePoints([0.1, 0.25]), cfg)
        assert out.shape == (200, 2, 2)
        direct = run_window_samples(heat_eq(), g, WHITE, 5, 200,
                                    [(0.25, 0.0, 4.0)])
        assert np.array_equal(out[:, 1, 1], direct[:, 0])

    def test_ladder_exceeds_grid(self):
        g = make_grid(dx=0.2, dt=0.025, R_max=2.0, pad=2.0)
        cfg = EnsembleConfig(n_paths=100, seed=5, R_ladder=(2.0, 4.0))
        with pytest.raises(ConfigurationError):
            run_ensemble(heat_eq(), g, WHITE, TimePoints([0.1]), cfg)


class TestEstimateCgf:
    def test_zero_lambda_exact(self, small_samples):
        f, _ = small_samples
        (est,) = estimate_cgf(f, [0.0], R=4.0)
        assert est.value == 0.0 and est.ci_halfwidth == 0.0 and est.trusted

    def test_matches_gaussian_value(self, small_samples):
        f, v = small_samples
        lam = 0.5
        ests = estimate_cgf(f, [lam], R=4.0, c_hat=v / 4.0)
        est = ests[0]
        assert est.trusted
        target = lam ** 2 * v / 2.0 / 4.0
        assert abs(est.value - target) <= 3.0 * est.ci_halfwidth

    def test_convex_in_lambda(self, small_samples):
        f, _ = small_samples
        lams = np.linspace(-0.8, 0.8, 9)
        vals = [e.value for e in estimate_cgf(f, lams, R=4.0)]
        d2 = np.diff(vals, 2)
        assert np.all(d2 >= -1e-9)

    def test_untrusted_when_exponent_cap_hit(self, small_samples):
        f, v = small_samples
        ests = estimate_cgf(f, [50.0], R=4.0, c_hat=v / 4.0)
        assert not ests[0].trusted

    def test_dimension_mismatch(self, small_samples):
        f, _ = small_samples
        with pytest.raises(ConfigurationError):
            estimate_cgf(f, [(0.1, 0.2)], R=4.0)

    def test_too_few_samples(self):
        with pytest.raises(StatisticsError):
            estimate_cgf(np.zeros(5), [0.1], R=1.0, batch_count=16)


class TestGFunctional:
    def test_constant_g_exact(self, small_samples):
        f, _ = small_samples
        g = make_test_function("negconst", {"c": 1.0}, k=1)
        est = estimate_gfunctional(f, g, R=4.0)
        assert est.value == pytest.approx(-1.0, abs=1e-12)
        assert est.lower_bound_ok

    def test_zero_samples_negsqrt(self):
        g = make_test_function("negsqrt", {}, k=1)
        est = estimate_gfunctional(np.zeros(1000), g, R=8.0)
        # g(0) = -sqrt(1 + 0) = -1 exactly for every sample
        assert est.value == pytest.approx(-1.0, abs=1e-12)

    def test_monotone_dominance(self, small_samples):
        """g1 <= g2 pointwise forces estimate(g1) <= estimate(g2)."""
        f, _ = small_samples
        g1 = make_test_function("negconst", {"c": 2.0}, k=1)
        g2 = make_test_function("negconst", {"c": 1.0}, k=1)
        e1 = estimate_gfunctional(f, g1, R=4.0)
        e2 = estimate_gfunctional(f, g2, R=4.0)
        assert e1.value <= e2.value + 1e-12


class TestTightness:
    def test_gaussian_samples_respect_bound(self, small_samples):
        f, v = small_samples
        c_hat = v / 4.0
        rep = exponential_tightness_check(f, R=4.0, c_hat=c_hat, alpha=1.0)
        assert rep["passed"], rep

    def test_reports_fields(self, small_samples):
        f, v = small_samples
        rep = exponential_tightness_check(f, R=4.0, c_hat=v / 4.0, alpha=0.5)
        assert set(rep) >= {"alpha", "empirical", "bound", "allowance",
                            "passed"}
