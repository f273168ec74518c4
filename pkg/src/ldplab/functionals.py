"""Centered spatial averages of field snapshots.

F^a_b(t) is the integral of (u(t, x) - E[u(t, x)]) over the window [a, b],
computed by trapezoid quadrature on the grid.  Centering always uses the
exact mean, never the ensemble mean, so there is no Monte Carlo noise floor
in the centering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError
from .solver import mean_function


@dataclass(frozen=True)
class TimePoints:
    """Observation times t_1 <= ... (duplicates allowed) inside [0, T]."""

    times: tuple

    def __init__(self, times, T=None):
        object.__setattr__(self, "times", tuple(float(t) for t in times))
        if T is not None:
            for t in self.times:
                if not 0.0 <= t <= T + 1e-12:
                    raise ConfigurationError(f"time {t} outside [0, {T}]")

    @property
    def k(self):
        return len(self.times)


@dataclass
class AverageSample:
    """Window integrals F^a_b(t_i) for one path (or a batch of paths)."""

    window: tuple
    times: tuple
    values: np.ndarray       # shape (..., k)
    normalized: np.ndarray   # values / (b - a)


def _window_weights(grid, a, b):
    """Trapezoid weights over the snapped window; returns (j_lo, j_hi, w)."""
    j_lo, j_hi, snap_err = grid.snap_window(a, b)
    if j_hi <= j_lo:
        raise ConfigurationError(f"window ({a}, {b}) snaps to zero width")
    n = j_hi - j_lo + 1
    w = np.full(n, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return j_lo, j_hi, w, snap_err


def spatial_average(snapshot, window, eq, grid, t):
    """Centered trapezoid integral of the snapshot over the window at time t.

    ``snapshot`` may be a single field (n_nodes,) or a batch (B, n_nodes);
    the result is a scalar or a (B,) vector accordingly.
    """
    a, b = window
    j_lo, j_hi, w, _ = _window_weights(grid, a, b)
    snapshot = np.asarray(snapshot, dtype=float)
    centered = snapshot[..., j_lo:j_hi + 1] - mean_function(eq, t)
    # multiply-then-sum keeps the reduction order independent of the batch
    # shape, so results are bitwise identical across batch sizes and threads
    out = np.sum(centered * w, axis=-1)
    return float(out) if out.ndim == 0 else out


def multi_time_vector(snapshots, time_points: TimePoints, window, eq, grid):
    """Component-wise spatial averages at each requested time.

    ``snapshots`` maps a time (or its snapped step index via float time key)
    to the field at that time.  Returns an AverageSample with values of
    shape (k,) for single fields or (B, k) for batches.
    """
    a, b = window
    vals = []
    for t in time_points.times:
        snap = None
        for key, f in snapshots.items():
            if abs(float(key) - t) < grid.dt:
                snap = f
                break
        if snap is None:
            raise ConfigurationError(f"no snapshot available for time {t}")
        vals.append(spatial_average(snap, window, eq, grid, t))
    values = np.stack([np.asarray(v) for v in vals], axis=-1)
    return AverageSample(window=(a, b), times=time_points.times, values=values,
                         normalized=values / (b - a))


def window_difference(snapshots, t, L, R, theta, grid, eq):
    """F^L_{L+Theta}(t) - F^{L+R}_{L+R+Theta}(t).

    The two windows have equal length Theta and are separated by R - Theta;
    this is the bounded-overlap quantity whose tails are controlled by the
    window-difference quadratic-variation bound.
    """
    snap = None
    for key, f in snapshots.items():
        if abs(float(key) - t) < grid.dt:
            snap = f
            break
    if snap is None:
        raise ConfigurationError(f"no snapshot available for time {t}")
    if theta <= 0:
        return 0.0 if np.asarray(snap).ndim == 1 else \
            np.zeros(np.asarray(snap).shape[0])
    first = spatial_average(snap, (L, L + theta), eq, grid, t)
    second = spatial_average(snap, (L + R, L + R + theta), eq, grid, t)
    return first - second
