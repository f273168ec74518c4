import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldplab import (ConfigurationError, EmbeddingError, GAUSS, GridConfig,
                    KernelError, STRETCHED15, StreamKey, WHITE,
                    build_colored_sampler, sample_colored_slice,
                    sample_white_slice)
from ldplab.noise import empirical_covariance_check, StatisticsError


def make_grid(dx=0.1, dt=0.005, T=0.5, R_max=8.0, pad=3.0):
    return GridConfig(dx=dx, dt=dt, T=T, R_max=R_max, pad=pad)


class TestStreamKey:
    def test_validation(self):
        with pytest.raises(ValueError):
            StreamKey(1, -1, 0)
        with pytest.raises(ValueError):
            StreamKey(1, 0, -2)


class TestWhite:
    def test_deterministic(self):
        g = make_grid()
        k = StreamKey(7, 3, 11)
        a = sample_white_slice(g, k).values
        b = sample_white_slice(g, k).values
        assert np.array_equal(a, b)

    def test_distinct_keys_differ(self):
        g = make_grid()
        a = sample_white_slice(g, StreamKey(7, 3, 11)).values
        b = sample_white_slice(g, StreamKey(7, 3, 12)).values
        c = sample_white_slice(g, StreamKey(7, 4, 11)).values
        d = sample_white_slice(g, StreamKey(8, 3, 11)).values
        for other in (b, c, d):
            assert not np.array_equal(a, other)

    def test_variance_scale(self):
        g = make_grid()
        vals = np.stack([sample_white_slice(g, StreamKey(1, p, 0)).values
                         for p in range(2000)])
        target = g.dt / g.dx
        assert np.isclose(vals.var(), target, rtol=0.05)

    def test_pad_enlargement_preserves_shared_nodes(self):
        g1 = make_grid(pad=3.0)
        g2 = make_grid(pad=5.0)
        k = StreamKey(42, 0, 9)
        v1 = sample_white_slice(g1, k).values
        v2 = sample_white_slice(g2, k).values
        a1 = g1.abs_indices()[1:-1]
        a2 = g2.abs_indices()[1:-1]
        common = np.intersect1d(a1, a2)
        m1 = {m: v1[i] for i, m in enumerate(a1)}
        m2 = {m: v2[i] for i, m in enumerate(a2)}
        assert all(m1[m] == m2[m] for m in common)

    def test_window_enlargement_preserves_shared_nodes(self):
        g1 = make_grid(R_max=8.0)
        g2 = make_grid(R_max=16.0)
        k = StreamKey(42, 5, 3)
        v1 = sample_white_slice(g1, k).values
        v2 = sample_white_slice(g2, k).values
        a1 = g1.abs_indices()[1:-1]
        a2 = g2.abs_indices()[1:-1]
        m2 = {m: v2[i] for i, m in enumerate(a2)}
        assert all(v1[i] == m2[m] for i, m in enumerate(a1))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 63 - 1), path=st.integers(0, 10 ** 9),
           step=st.integers(0, 10 ** 6))
    def test_reproducible_for_any_key(self, seed, path, step):
        g = make_grid(dx=0.5, pad=1.0, R_max=2.0)
        k = StreamKey(seed, path, step)
        assert np.array_equal(sample_white_slice(g, k).values,
                              sample_white_slice(g, k).values)


class TestColored:
    def test_white_has_no_sampler(self):
        with pytest.raises(KernelError):
            build_colored_sampler(WHITE, make_grid())

    def test_extent_must_cover_correlation(self):
        tiny = make_grid(R_max=2.0, pad=1.0)
        with pytest.raises(ConfigurationError):
            build_colored_sampler(GAUSS, tiny)

    def test_clip_report_small(self):
        g = make_grid(dx=0.2, R_max=8.0, pad=6.0)
        s = build_colored_sampler(GAUSS, g)
        assert 0.0 <= s.clip_report <= 1e-6
        assert s.embedding_size >= 2 * g.n_interior

    def test_deterministic(self):
        g = make_grid(dx=0.2, R_max=8.0, pad=6.0)
        s = build_colored_sampler(GAUSS, g)
        k = StreamKey(3, 1, 4)
        assert np.array_equal(sample_colored_slice(s, k).values,
                              sample_colored_slice(s, k).values)

    def test_empirical_covariance_gauss(self):
        g = make_grid(dx=0.2, R_max=8.0, pad=6.0)
        s = build_colored_sampler(GAUSS, g)
        slices = np.stack([sample_colored_slice(s, StreamKey(5, p, 0)).values
                           for p in range(10_000)])
        rep = empirical_covariance_check(slices, GAUSS, g)
        assert rep["passed"], rep

    def test_empirical_covariance_stretched(self):
        g = make_grid(dx=0.25, R_max=10.0, pad=8.0)
        s = build_colored_sampler(STRETCHED15, g)
        slices = np.stack([sample_colored_slice(s, StreamKey(6, p, 0)).values
                           for p in range(10_000)])
        rep = empirical_covariance_check(slices, STRETCHED15, g)
        assert rep["passed"], rep


class TestEmpiricalCheck:
    def test_white_passes(self):
        g = make_grid(dx=0.5, R_max=2.0, pad=1.0)
        slices = np.stack([sample_white_slice(g, StreamKey(2, p, 0)).values
                           for p in range(10_000)])
        rep = empirical_covariance_check(slices, WHITE, g)
        assert rep["passed"], rep
        assert rep["target"][0] == pytest.approx(g.dt / g.dx)
        assert np.all(rep["target"][1:] == 0.0)

    def test_needs_enough_slices(self):
        g = make_grid()
        with pytest.raises(StatisticsError):
            empirical_covariance_check(np.zeros((100, g.n_interior)), WHITE, g)
