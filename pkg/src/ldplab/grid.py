"""Uniform space-time grid for the truncated simulation domain.

The spatial domain [-pad, R_max + pad] truncates the real line; padding is
sized from Green's-function decay (heat) or finite propagation speed (wave)
plus the noise correlation length, so that windows inside [0, R_max] are
insensitive to the boundary clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """A grid or run configuration violates a module precondition."""


def required_pad(kind, T, corr_length):
    """Padding policy: 6*sqrt(T) + 3*corr (heat), T + 3*corr (wave)."""
    if kind == "heat":
        return 6.0 * math.sqrt(T) + 3.0 * corr_length
    return T + 3.0 * corr_length


@dataclass(frozen=True)
class GridConfig:
    """Space-time discretization of the truncated domain.

    Nodes are at x_lo + j*dx with x = 0 and x = R_max exactly on nodes;
    pad is snapped outward to a whole number of cells.
    """

    dx: float
    dt: float
    T: float
    R_max: float
    pad: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if min(self.dx, self.dt, self.T, self.R_max, self.pad) <= 0:
            raise ConfigurationError("dx, dt, T, R_max, pad must all be positive")
        if abs(self.R_max / self.dx - round(self.R_max / self.dx)) > 1e-9:
            raise ConfigurationError(
                f"R_max={self.R_max} must be a whole number of cells of dx={self.dx}"
            )
        n_steps = round(self.T / self.dt)
        if n_steps < 1 or abs(n_steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigurationError(
                f"T={self.T} must be a whole number of steps of dt={self.dt}"
            )

    @property
    def n_steps(self):
        return round(self.T / self.dt)

    @property
    def n_pad_cells(self):
        return int(math.ceil(self.pad / self.dx - 1e-9))

    @property
    def x_lo(self):
        return -self.n_pad_cells * self.dx

    @property
    def x_hi(self):
        return self.R_max + self.n_pad_cells * self.dx

    @property
    def n_nodes(self):
        return self.n_pad_cells * 2 + round(self.R_max / self.dx) + 1

    @property
    def n_interior(self):
        return self.n_nodes - 2

    def nodes(self):
        if "nodes" not in self._cache:
            self._cache["nodes"] = self.x_lo + self.dx * np.arange(self.n_nodes)
        return self._cache["nodes"]

    def abs_indices(self):
        """Signed node indices relative to x = 0 (stable under pad changes)."""
        if "abs" not in self._cache:
            self._cache["abs"] = np.arange(self.n_nodes) - self.n_pad_cells
        return self._cache["abs"]

    def snap_time(self, t):
        """Snap t to the nearest grid time.  Returns (step_index, snap_error)."""
        if not 0.0 <= t <= self.T + 1e-12:
            raise ConfigurationError(f"time {t} outside [0, {self.T}]")
        idx = int(round(t / self.dt))
        idx = min(idx, self.n_steps)
        err = abs(idx * self.dt - t)
        if err >= self.dt:
            raise ConfigurationError(f"time snap error {err} exceeds dt={self.dt}")
        return idx, err

    def snap_window(self, a, b):
        """Snap [a, b] outward to nodes.  Returns (j_lo, j_hi, snap_error)."""
        if not a < b:
            raise ConfigurationError(f"window requires a < b, got ({a}, {b})")
        if a < self.x_lo - 1e-9 or b > self.x_hi + 1e-9:
            raise ConfigurationError(
                f"window ({a}, {b}) outside domain [{self.x_lo}, {self.x_hi}]"
            )
        j_lo = int(math.floor((a - self.x_lo) / self.dx + 1e-9))
        j_hi = int(math.ceil((b - self.x_lo) / self.dx - 1e-9))
        j_hi = min(j_hi, self.n_nodes - 1)
        nodes = self.nodes()
        err = max(abs(nodes[j_lo] - a), abs(nodes[j_hi] - b))
        return j_lo, j_hi, err

    def check_pad(self, kind, corr_length):
        need = required_pad(kind, self.T, corr_length)
        if self.pad < need - 1e-9:
            raise ConfigurationError(
                f"pad={self.pad} below required {need:.4g} for kind={kind!r}, "
                f"T={self.T}, correlation length {corr_length}"
            )


def stability_check(grid, kind):
    """Explicit-scheme stability: dt <= dx**2 (heat), dt <= dx (wave).

    Returns the binding ratio (<= 1 passes); raises ConfigurationError on
    violation.
    """
    if kind == "heat":
        limit = grid.dx ** 2
        name = "dt <= dx^2"
    elif kind == "wave":
        limit = grid.dx
        name = "dt <= dx (unit-speed CFL)"
    else:
        raise ConfigurationError(f"unknown operator kind {kind!r}")
    ratio = grid.dt / limit
    if ratio > 1.0 + 1e-12:
        raise ConfigurationError(
            f"stability violated for {kind}: {name}; dt={grid.dt}, dx={grid.dx}, "
            f"ratio={ratio:.4g}"
        )
    return ratio
