"""Path ensembles and streaming exponential-moment estimators.

One simulated path serves every window in the ladder and every tilt
parameter lambda (common random numbers).  Exponential-moment estimates
carry explicit trust guards: an exponent-spread cap and an effective sample
size floor, because plain Monte Carlo cannot see tails beyond a few standard
deviations.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError
from .functionals import spatial_average
from .noise import StatisticsError, build_colored_sampler
from .solver import advance_paths

DEFAULT_EXPONENT_CAP = 20.0
DEFAULT_ESS_FRAC = 0.01


class MergeError(ValueError):
    """Attempt to merge accumulators with different contexts."""


@dataclass(frozen=True)
class EnsembleConfig:
    """Size, seed, and ladder of a Monte Carlo ensemble."""

    n_paths: int
    seed: int
    R_ladder: tuple
    batch_count: int = 16
    batch_size: int = 256
    path_offset: int = 0
    n_threads: int = 1

    def __post_init__(self):
        if self.n_paths < 100:
            raise ConfigurationError("n_paths must be at least 100")
        if self.batch_count < 8:
            raise ConfigurationError("batch_count must be at least 8")
        ladder = tuple(self.R_ladder)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigurationError("R_ladder must be strictly increasing")
        object.__setattr__(self, "R_ladder", ladder)


def run_window_samples(eq, grid, kernel, seed, n_paths, observations,
                       batch_size=256, path_offset=0, n_threads=1):
    """Simulate n_paths and return window integrals at the requested
    (t, a, b) observations as an (n_paths, n_obs) array.

    Results are deterministic in (seed, path_offset) and independent of
    batch_size and n_threads: every path's noise is addressed by its global
    path index.
    """
    observations = [(float(t), float(a), float(b)) for t, a, b in observations]
    steps = {}
    for t, a, b in observations:
        s, _ = grid.snap_time(t)
        steps.setdefault(s, []).append((t, a, b))
    obs_index = {o: i for i, o in enumerate(observations)}
    out = np.empty((n_paths, len(observations)))
    sampler = None if kernel.white else build_colored_sampler(kernel, grid)

    def run_chunk(start):
        stop = min(start + batch_size, n_paths)
        paths = list(range(path_offset + start, path_offset + stop))

        def observe(step, fields):
            for t, a, b in steps[step]:
                vals = spatial_average(fields, (a, b), eq, grid, step * grid.dt)
                out[start:stop, obs_index[(t, a, b)]] = vals

        advance_paths(eq, grid, kernel, seed, paths, steps.keys(), observe,
                      sampler=sampler)

    starts = list(range(0, n_paths, batch_size))
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for s in starts:
            run_chunk(s)
    return out


def run_ensemble(eq, grid, kernel, time_points, config: EnsembleConfig):
    """Sample tensors F_R(t_i) for every R in the ladder.

    Returns an (n_paths, len(ladder), k) array; entry [p, j, i] is the
    centered integral of path p over [0, R_j] at time t_i.
    """
    if max(config.R_ladder) > grid.R_max + 1e-9:
        raise ConfigurationError("largest ladder window exceeds grid R_max")
    times = list(time_points.times)
    obs = [(t, 0.0, float(R)) for R in config.R_ladder for t in times]
    flat = run_window_samples(
        eq, grid, kernel, config.seed, config.n_paths, obs,
        batch_size=config.batch_size, path_offset=config.path_offset,
        n_threads=config.n_threads,
    )
    return flat.reshape(config.n_paths, len(config.R_ladder), len(times))


def log_mean_exp(exponents):
    """log((1/n) sum exp(x_i)) with max-shift; exact for constant input."""
    x = np.asarray(exponents, dtype=float)
    if x.size == 0:
        raise StatisticsError("log_mean_exp of an empty sample")
    m = float(np.max(x))
    if not np.isfinite(m):
        raise StatisticsError("log_mean_exp requires finite exponents")
    if np.all(x == m):
        return m
    return m + math.log(float(np.mean(np.exp(x - m))))


@dataclass
class ExpMomentAccumulator:
    """Mergeable partial sums of exp(exponent), stored max-shifted.

    The log-mean-exp result is invariant (to 1e-12 relative) under any merge
    order because each merge rescales to the common running max.
    """

    context: tuple = ()
    shift: float = -math.inf
    sum_exp: float = 0.0
    count: int = 0

    def add(self, exponents):
        x = np.asarray(exponents, dtype=float)
        if x.size == 0:
            return self
        m = float(np.max(x))
        new_shift = max(self.shift, m)
        scaled = self.sum_exp * math.exp(self.shift - new_shift) \
            if self.count else 0.0
        self.shift = new_shift
        self.sum_exp = scaled + float(np.sum(np.exp(x - new_shift)))
        self.count += x.size
        return self

    def merge(self, other):
        if other.context != self.context:
            raise MergeError(
                f"cannot merge contexts {self.context!r} and {other.context!r}"
            )
        out = ExpMomentAccumulator(context=self.context)
        if self.count == 0:
            out.shift, out.sum_exp, out.count = other.shift, other.sum_exp, other.count
            return out
        if other.count == 0:
            out.shift, out.sum_exp, out.count = self.shift, self.sum_exp, self.count
            return out
        out.shift = max(self.shift, other.shift)
        out.sum_exp = (self.sum_exp * math.exp(self.shift - out.shift)
                       + other.sum_exp * math.exp(other.shift - out.shift))
        out.count = self.count + other.count
        return out

    def log_mean_exp(self):
        if self.count == 0:
            raise StatisticsError("empty accumulator")
        return self.shift + math.log(self.sum_exp / self.count)


def merge(acc1, acc2):
    return acc1.merge(acc2)


@dataclass(frozen=True)
class CgfEstimate:
    """One point of the empirical scaled cumulant generating function."""

    lam: tuple
    value: float
    ci_halfwidth: float
    ess: float
    trusted: bool
    n_paths: int
    R: float


def _batch_means_ci(per_batch, z=1.96):
    b = np.asarray(per_batch, dtype=float)
    if b.size < 2:
        return math.inf
    return float(z * np.std(b, ddof=1) / math.sqrt(b.size))


def estimate_cgf(samples, lambda_grid, R, c_hat=None, batch_count=16,
                 exponent_cap=DEFAULT_EXPONENT_CAP,
                 ess_min_frac=DEFAULT_ESS_FRAC):
    """Empirical Lambda_R(lambda) = (1/R) log mean exp(lambda . F) per lambda.

    All lambdas reuse the same samples (common random numbers).  A point is
    trusted only if the exponent-spread guard |lambda| * sqrt(c_hat*R) * 4
    <= exponent_cap holds (when c_hat is known) and the effective sample
    size stays above ess_min_frac of the ensemble.
    """
    F = np.asarray(samples, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    n = F.shape[0]
    if n < batch_count:
        raise StatisticsError("fewer samples than batches")
    edges = np.linspace(0, n, batch_count + 1).astype(int)
    out = []
    for lam in lambda_grid:
        lam_vec = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam_vec.size != F.shape[1]:
            raise ConfigurationError(
                f"lambda dimension {lam_vec.size} != sample dimension {F.shape[1]}"
            )
        lam_key = tuple(float(v) for v in lam_vec)
        if all(v == 0.0 for v in lam_key):
            out.append(CgfEstimate(lam=lam_key, value=0.0, ci_halfwidth=0.0,
                                   ess=float(n), trusted=True, n_paths=n, R=R))
            continue
        expo = F @ lam_vec
        value = log_mean_exp(expo) / R
        w = np.exp(expo - np.max(expo))
        ess = float(w.sum() ** 2 / np.sum(w * w))
        per_batch = [log_mean_exp(expo[a:b]) / R
                     for a, b in zip(edges[:-1], edges[1:])]
        ci = _batch_means_ci(per_batch)
        trusted = ess >= ess_min_frac * n
        if c_hat is not None:
            norm = float(np.linalg.norm(lam_vec))
            trusted = trusted and (norm * math.sqrt(c_hat * R) * 4.0
                                   <= exponent_cap)
        out.append(CgfEstimate(lam=lam_key, value=float(value),
                               ci_halfwidth=ci, ess=ess, trusted=bool(trusted),
                               n_paths=n, R=R))
    return out


@dataclass(frozen=True)
class GFunctionalEstimate:
    """Estimate of (1/R) log E[exp(R g(F/R))] for a concave test function."""

    g_id: str
    value: float
    ci_halfwidth: float
    ess: float
    trusted: bool
    lower_bound_ok: bool
    m_g: float
    R: float
    n_paths: int


def estimate_gfunctional(samples, g, R, batch_count=16,
                         ess_min_frac=DEFAULT_ESS_FRAC):
    """Estimate the normalized log exponential g-moment of F/R.

    Also checks the generic lower bound value >= -m_g + (1/R) log(1/2),
    which holds for large R because F/R concentrates inside [-1, 1]^k where
    g >= -m_g.
    """
    F = np.asarray(samples, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    n = F.shape[0]
    expo = R * g(F / R)
    if expo.shape != (n,):
        raise ConfigurationError("test function must map (n, k) samples to (n,)")
    value = log_mean_exp(expo) / R
    w = np.exp(expo - np.max(expo))
    ess = float(w.sum() ** 2 / np.sum(w * w))
    edges = np.linspace(0, n, batch_count + 1).astype(int)
    per_batch = [log_mean_exp(expo[a:b]) / R
                 for a, b in zip(edges[:-1], edges[1:])]
    ci = _batch_means_ci(per_batch)
    lower = -g.m_g + math.log(0.5) / R
    return GFunctionalEstimate(
        g_id=g.name, value=float(value), ci_halfwidth=ci, ess=ess,
        trusted=ess >= ess_min_frac * n, lower_bound_ok=bool(value >= lower),
        m_g=g.m_g, R=R, n_paths=n,
    )


def exponential_tightness_check(samples, R, c_hat, alpha, slack=1.0):
    """Empirical escape probability of F/R from the box [-L, L]^k with
    L = sqrt(2 alpha c_hat), against the bound 2k exp(-alpha R).

    ``slack`` inflates the bound multiplicatively; a binomial 99% upper
    confidence allowance is always added on top.
    """
    F = np.asarray(samples, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    n, k = F.shape
    L = math.sqrt(2.0 * alpha * c_hat)
    escaped = np.any(np.abs(F / R) > L, axis=1)
    p_emp = float(np.mean(escaped))
    bound = 2.0 * k * math.exp(-alpha * R) * (1.0 + slack)
    b = min(bound, 1.0)
    allowance = 2.58 * math.sqrt(b * (1 - b) / n) + 1.0 / n
    return {
        "alpha": alpha, "box_halfwidth": L, "empirical": p_emp,
        "bound": bound, "allowance": allowance,
        "passed": bool(p_emp <= bound + allowance), "n_paths": n, "R": R,
    }
