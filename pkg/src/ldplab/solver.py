"""Explicit finite-difference schemes for the two stochastic PDEs.

Heat uses forward-time centered-space for dt*(0.5*u_xx) plus the noise
forcing sigma(u)*xi; wave uses leapfrog with forcing dt*sigma(u)*xi.  The
truncated domain is clamped at the boundary to the deterministic mean, which
is exact for the ensemble average and accurate in distribution thanks to the
padding policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import ConfigurationError, GridConfig, stability_check  # noqa: F401
from .kernels import HEAT, WAVE, _check_kind
from .noise import StreamKey, build_colored_sampler, sample_colored_slice, \
    sample_white_slice


class NumericalError(RuntimeError):
    """Scheme produced non-finite values (blow-up)."""


@dataclass(frozen=True)
class SigmaSpec:
    """Diffusion coefficient preset with recorded sup and Lipschitz bounds."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    lipschitz: float
    params: tuple = ()

    def __call__(self, u):
        return self.fn(u)


def sigma_const(c):
    c = float(c)
    return SigmaSpec(name=f"const({c})", fn=lambda u: np.full_like(u, c, dtype=float),
                     sup_norm=abs(c), lipschitz=0.0, params=(c,))


def sigma_tanh(a=1.0, b=1.0):
    a, b = float(a), float(b)
    return SigmaSpec(name=f"tanh({a},{b})", fn=lambda u: a * np.tanh(b * u),
                     sup_norm=abs(a), lipschitz=abs(a * b), params=(a, b))


def _cosdamp_lip(a):
    # numeric sup of |d/du a*cos(u)/(1+u^2)| on a dense grid; padded 1%
    u = np.linspace(-30, 30, 240_001)
    d = a * (-np.sin(u) * (1 + u * u) - 2 * u * np.cos(u)) / (1 + u * u) ** 2
    return float(np.max(np.abs(d)) * 1.01)


def sigma_cosdamp(a=1.0):
    a = float(a)
    return SigmaSpec(name=f"cosdamp({a})",
                     fn=lambda u: a * np.cos(u) / (1.0 + u * u),
                     sup_norm=abs(a), lipschitz=_cosdamp_lip(a), params=(a,))


def sigma_by_name(name, params=None):
    params = dict(params or {})
    if name == "const":
        return sigma_const(params.get("c", 1.0))
    if name == "tanh":
        return sigma_tanh(params.get("a", 1.0), params.get("b", 1.0))
    if name == "cosdamp":
        return sigma_cosdamp(params.get("a", 1.0))
    raise ConfigurationError(f"unknown sigma preset {name!r}")


@dataclass(frozen=True)
class EquationSpec:
    """Operator kind, diffusion coefficient, and constant initial data."""

    kind: str
    sigma: SigmaSpec
    c_h: float = 0.0           # heat: u(0, x) = c_h
    c_w1: float = 0.0          # wave: u(0, x) = c_w1
    c_w2: float = 0.0          # wave: du/dt(0, x) = c_w2

    def __post_init__(self):
        _check_kind(self.kind)
        for v in (self.c_h, self.c_w1, self.c_w2):
            if not np.isfinite(v):
                raise ConfigurationError("initial data must be finite constants")


def mean_function(eq, t):
    """E[u(t, x)]: c_h for heat, t*c_w2 + c_w1 for wave (exact)."""
    if t < 0:
        raise ConfigurationError("mean_function requires t >= 0")
    if eq.kind == HEAT:
        return eq.c_h
    return t * eq.c_w2 + eq.c_w1


@dataclass
class FieldState:
    """Field values on all nodes at one time layer (wave also keeps the
    previous layer for the leapfrog)."""

    current: np.ndarray
    time_index: int
    previous: np.ndarray | None = None


def initial_state(eq, grid):
    n = grid.n_nodes
    if eq.kind == HEAT:
        return FieldState(current=np.full(n, eq.c_h, dtype=float), time_index=0)
    return FieldState(current=np.full(n, eq.c_w1, dtype=float), time_index=0)


def _check_finite(u, step, what):
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"{what} produced non-finite values at step {step}")


def step_heat(state, noise_slice, eq, grid):
    """One FTCS step with multiplicative forcing; boundaries clamped to the
    deterministic mean."""
    if eq.kind != HEAT:
        raise ConfigurationError("step_heat requires a heat equation spec")
    if noise_slice.step_index != state.time_index:
        raise ConfigurationError(
            f"noise slice step {noise_slice.step_index} does not match state "
            f"time index {state.time_index}"
        )
    u = state.current
    r = grid.dt / (2.0 * grid.dx ** 2)
    nxt = u.copy()
    lap = u[2:] - 2.0 * u[1:-1] + u[:-2]
    nxt[1:-1] = u[1:-1] + r * lap + eq.sigma(u[1:-1]) * noise_slice.values
    t_next = (state.time_index + 1) * grid.dt
    nxt[0] = nxt[-1] = mean_function(eq, t_next)
    _check_finite(nxt, state.time_index + 1, "heat step")
    return FieldState(current=nxt, time_index=state.time_index + 1)


def step_wave(state, noise_slice, eq, grid):
    """One leapfrog step.  The first layer is the deterministic expansion
    u(dt) = c_w1 + dt*c_w2; leapfrog starts from layer one."""
    if eq.kind != WAVE:
        raise ConfigurationError("step_wave requires a wave equation spec")
    u = state.current
    t_next = (state.time_index + 1) * grid.dt
    if state.time_index == 0:
        nxt = np.full_like(u, eq.c_w1 + grid.dt * eq.c_w2)
        nxt[0] = nxt[-1] = mean_function(eq, t_next)
        return FieldState(current=nxt, previous=u, time_index=1)
    if noise_slice.step_index != state.time_index:
        raise ConfigurationError(
            f"noise slice step {noise_slice.step_index} does not match state "
            f"time index {state.time_index}"
        )
    if state.previous is None:
        raise ConfigurationError("wave step needs the previous layer")
    c2 = (grid.dt / grid.dx) ** 2
    lap = u[2:] - 2.0 * u[1:-1] + u[:-2]
    nxt = u.copy()
    nxt[1:-1] = (2.0 * u[1:-1] - state.previous[1:-1] + c2 * lap
                 + grid.dt * eq.sigma(u[1:-1]) * noise_slice.values)
    nxt[0] = nxt[-1] = mean_function(eq, t_next)
    _check_finite(nxt, state.time_index + 1, "wave step")
    return FieldState(current=nxt, previous=u, time_index=state.time_index + 1)


# ---------------------------------------------------------------------------
# Batched path advancement (shared by simulate_path and the ensemble runner).

def _noise_matrix(kernel, sampler, grid, seed, path_indices, step):
    xi = np.empty((len(path_indices), grid.n_interior))
    if kernel.white:
        for i, p in enumerate(path_indices):
            xi[i] = sample_white_slice(grid, StreamKey(seed, p, step)).values
    else:
        for i, p in enumerate(path_indices):
            xi[i] = sample_colored_slice(sampler, StreamKey(seed, p, step)).values
    return xi


def advance_paths(eq, grid, kernel, seed, path_indices, observe_steps, on_observe,
                  sampler=None):
    """Advance a batch of paths, calling on_observe(step, fields) at each
    requested step.  ``fields`` is a (batch, n_nodes) array view; copy it if
    it must outlive the call.  Fully deterministic in (seed, path indices).
    """
    stability_check(grid, eq.kind)
    if not kernel.white and sampler is None:
        sampler = build_colored_sampler(kernel, grid)
    observe_steps = sorted(set(int(s) for s in observe_steps))
    if observe_steps and (observe_steps[0] < 0 or observe_steps[-1] > grid.n_steps):
        raise ConfigurationError("observation steps outside [0, n_steps]")
    pending = list(observe_steps)

    B = len(path_indices)
    n = grid.n_nodes
    if eq.kind == HEAT:
        u = np.full((B, n), eq.c_h, dtype=float)
    else:
        u = np.full((B, n), eq.c_w1, dtype=float)
    prev = None

    if pending and pending[0] == 0:
        on_observe(0, u)
        pending.pop(0)
    if not pending:
        return

    r = grid.dt / (2.0 * grid.dx ** 2)
    c2 = (grid.dt / grid.dx) ** 2
    last = pending[-1]
    for step in range(last):
        t_next = (step + 1) * grid.dt
        if eq.kind == HEAT:
            xi = _noise_matrix(kernel, sampler, grid, seed, path_indices, step)
            lap = u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
            u[:, 1:-1] += r * lap + eq.sigma(u[:, 1:-1]) * xi
            u[:, 0] = u[:, -1] = mean_function(eq, t_next)
        else:
            if step == 0:
                prev = u
                u = np.full((B, n), eq.c_w1 + grid.dt * eq.c_w2)
                u[:, 0] = u[:, -1] = mean_function(eq, t_next)
            else:
                xi = _noise_matrix(kernel, sampler, grid, seed, path_indices, step)
                lap = u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
                nxt = 2.0 * u - prev
                nxt[:, 1:-1] += c2 * lap + grid.dt * eq.sigma(u[:, 1:-1]) * xi
                nxt[:, 0] = nxt[:, -1] = mean_function(eq, t_next)
                prev = u
                u = nxt
        if not np.all(np.isfinite(u[:, 1:-1])):
            bad = np.where(~np.all(np.isfinite(u), axis=1))[0]
            raise NumericalError(
                f"blow-up at step {step + 1} in path(s) "
                f"{[path_indices[i] for i in bad[:5]]}"
            )
        if pending and step + 1 == pending[0]:
            on_observe(step + 1, u)
            pending.pop(0)


@dataclass
class PathObservation:
    """Snapshots of one path at requested times."""

    times_requested: list
    times_snapped: list
    snap_errors: list
    fields: list  # one (n_nodes,) array per time


def simulate_path(eq, grid, kernel, observe_times, key_base: StreamKey):
    """Simulate one path and return field snapshots at the requested times
    (snapped to grid times, snap error recorded).  Deterministic in
    (key_base.seed, key_base.path_index, grid, eq, kernel)."""
    snapped = [grid.snap_time(t) for t in observe_times]
    steps = [s for s, _ in snapped]
    order = {}
    for s in set(steps):
        order[s] = None

    def keep(step, fields):
        order[step] = fields[0].copy()

    advance_paths(eq, grid, kernel, key_base.seed, [key_base.path_index],
                  set(steps), keep)
    return PathObservation(
        times_requested=list(observe_times),
        times_snapped=[s * grid.dt for s, _ in snapped],
        snap_errors=[e for _, e in snapped],
        fields=[order[s] for s in steps],
    )
