"""From CGF ladders to rate functions.

The empirical scaled cumulant generating function is tabulated on a lattice
of tilt parameters for each window length R, extrapolated in R with the
two-parameter model value + a/R, and conjugated by exhaustive lattice
maximization.  For constant diffusion coefficient the whole chain has an
exact Gaussian reference computed by deterministic quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import ConfigurationError
from .kernels import HEAT, WAVE, _check_kind, greens_mass, kernel_l1, \
    window_cross_moment


@dataclass
class CgfTable:
    """Empirical CGF values on a tilt lattice, one column per window length.

    ``lambdas`` has shape (m, k); ``values``/``ci``/``trusted`` have shape
    (m, n_R).  ``extrapolated`` (and its flags) are filled by
    ``extrapolate_cgf``.
    """

    k: int
    lambdas: np.ndarray
    R_values: tuple
    values: np.ndarray
    ci: np.ndarray
    ess: np.ndarray
    trusted: np.ndarray
    extrapolated: np.ndarray | None = None
    extrap_trusted: np.ndarray | None = None
    extrap_residual: np.ndarray | None = None
    extrap_fallback: np.ndarray | None = None


def build_cgf_table(estimates_by_R):
    """Assemble a CgfTable from {R: [CgfEstimate, ...]} with a common
    lambda grid (same order in every column)."""
    R_values = tuple(sorted(estimates_by_R))
    first = estimates_by_R[R_values[0]]
    lams = np.array([e.lam for e in first], dtype=float)
    m = lams.shape[0]
    k = lams.shape[1]
    nR = len(R_values)
    values = np.empty((m, nR))
    ci = np.empty((m, nR))
    ess = np.empty((m, nR))
    trusted = np.empty((m, nR), dtype=bool)
    for j, R in enumerate(R_values):
        col = estimates_by_R[R]
        if len(col) != m or any(tuple(e.lam) != tuple(lams[i]) for i, e in enumerate(col)):
            raise ConfigurationError("lambda grids differ across the ladder")
        values[:, j] = [e.value for e in col]
        ci[:, j] = [e.ci_halfwidth for e in col]
        ess[:, j] = [e.ess for e in col]
        trusted[:, j] = [e.trusted for e in col]
    return CgfTable(k=k, lambdas=lams, R_values=R_values, values=values,
                    ci=ci, ess=ess, trusted=trusted)


def extrapolate_point(R_values, values, ci=None, trusted=None):
    """Extrapolate one lambda's ladder with the model value + a/R.

    Weighted least squares with weights 1/ci^2; falls back to the largest
    trusted R value when fewer than 3 trusted points exist or the fit
    residual exceeds the CI scale.  Returns (value, residual, fallback).
    """
    R = np.asarray(R_values, dtype=float)
    v = np.asarray(values, dtype=float)
    if ci is None:
        ci = np.zeros_like(v)
    ci = np.asarray(ci, dtype=float)
    if trusted is None:
        trusted = np.ones_like(v, dtype=bool)
    trusted = np.asarray(trusted, dtype=bool)
    if not np.any(trusted):
        raise ConfigurationError("no trusted ladder points to extrapolate")
    Rt, vt, cit = R[trusted], v[trusted], ci[trusted]
    largest = vt[np.argmax(Rt)]
    if Rt.size < 3:
        return float(largest), math.inf, True
    w = 1.0 / np.maximum(cit, 1e-12) ** 2
    A = np.vstack([np.ones_like(Rt), 1.0 / Rt]).T
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], vt * sw, rcond=None)
    fit = A @ coef
    resid = float(np.sqrt(np.mean((fit - vt) ** 2)))
    ci_scale = float(np.mean(cit))
    if resid > max(2.0 * ci_scale, 1e-9):
        return float(largest), resid, True
    return float(coef[0]), resid, False


def extrapolate_cgf(table: CgfTable):
    """Fill the extrapolated column of a CgfTable, one lambda at a time."""
    m = table.lambdas.shape[0]
    ext = np.empty(m)
    ext_tr = np.empty(m, dtype=bool)
    resid = np.empty(m)
    fb = np.empty(m, dtype=bool)
    for i in range(m):
        tr = table.trusted[i]
        if not np.any(tr):
            ext[i] = np.nan
            ext_tr[i] = False
            resid[i] = math.inf
            fb[i] = True
            continue
        ext[i], resid[i], fb[i] = extrapolate_point(
            table.R_values, table.values[i], table.ci[i], tr)
        ext_tr[i] = bool(np.all(tr))
    if np.any(np.all(table.lambdas == 0.0, axis=1)):
        zero = np.all(table.lambdas == 0.0, axis=1)
        ext[zero] = 0.0
        ext_tr[zero] = True
    table.extrapolated = ext
    table.extrap_trusted = ext_tr
    table.extrap_residual = resid
    table.extrap_fallback = fb
    return table


def convexity_defect(xs, values):
    """Most negative scaled second difference along a 1D grid (>= 0 means
    convex).  Grid need not be uniform."""
    x = np.asarray(xs, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.size < 3:
        return 0.0
    s = np.diff(v) / np.diff(x)
    return float(np.min(np.diff(s), initial=0.0))


def convexify(xs, values):
    """Smallest-change convex minorant-style repair: isotonic regression
    (pool adjacent violators) on the chord slopes, then re-integration
    anchored at the first point."""
    x = np.asarray(xs, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.size < 3:
        return v.copy()
    dx = np.diff(x)
    slopes = np.diff(v) / dx
    # PAV with weights dx: makes slopes nondecreasing
    level = []
    for s, w in zip(slopes, dx):
        level.append([s, w])
        while len(level) > 1 and level[-2][0] > level[-1][0] - 1e-300:
            s2, w2 = level.pop()
            s1, w1 = level.pop()
            level.append([(s1 * w1 + s2 * w2) / (w1 + w2), w1 + w2])
    # expand pooled levels back to per-interval slopes
    out_slopes = np.empty_like(slopes)
    i = 0
    for s, w in level:
        acc = 0.0
        j = i
        while j < dx.size and acc < w - 1e-12:
            acc += dx[j]
            j += 1
        out_slopes[i:j] = s
        i = j
    out = np.empty_like(v)
    out[0] = v[0]
    out[1:] = v[0] + np.cumsum(out_slopes * dx)
    return out


@dataclass
class RateFunctionGrid:
    """Discrete Fenchel-Legendre transform values on an x lattice."""

    x_grid: np.ndarray            # (p, k)
    values: np.ndarray            # (p,)
    boundary: np.ndarray          # (p,) True where the max hit the lambda edge
    argmin: np.ndarray
    lambdas_used: np.ndarray


def legendre_transform(lambdas, values, x_grid, trusted=None):
    """I(x) = max over lattice lambdas of (lambda . x - Lambda(lambda)).

    Only trusted lattice points enter the maximization.  Where the argmax
    sits on the edge of the trusted lambda range (per coordinate) the value
    is only a lower bound and is flagged.
    """
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    if lam.shape[0] == 1 and lam.shape[1] > 1 and np.asarray(x_grid).ndim == 1:
        lam = lam.T
    v = np.asarray(values, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if lam.shape[1] != x.shape[1]:
        raise ConfigurationError("lambda and x dimensions differ")
    if trusted is None:
        trusted = np.ones(lam.shape[0], dtype=bool)
    trusted = np.asarray(trusted, dtype=bool) & np.isfinite(v)
    if not np.any(trusted):
        raise ConfigurationError("no trusted CGF points for the transform")
    lam_t = lam[trusted]
    v_t = v[trusted]
    scores = x @ lam_t.T - v_t[None, :]          # (p, m_t)
    idx = np.argmax(scores, axis=1)
    vals = scores[np.arange(x.shape[0]), idx]
    vals = np.maximum(vals, 0.0)                 # lambda = 0 gives 0 always
    lo = lam_t.min(axis=0)
    hi = lam_t.max(axis=0)
    arg = lam_t[idx]
    span = np.maximum(hi - lo, 1e-300)
    on_edge = np.any((np.abs(arg - lo) < 1e-12 * span + 1e-300)
                     | (np.abs(arg - hi) < 1e-12 * span + 1e-300), axis=1)
    # the zero tilt never flags (it is interior whenever the grid straddles 0)
    interior_zero = np.all(np.abs(arg) < 1e-300, axis=1) & (np.all(lo < 0) and np.all(hi > 0))
    on_edge = on_edge & ~interior_zero
    argmin = x[int(np.argmin(vals))]
    return RateFunctionGrid(x_grid=x, values=vals, boundary=on_edge,
                            argmin=argmin, lambdas_used=lam_t)


def biconjugate(rate: RateFunctionGrid, lambdas):
    """Conjugate of the rate grid back to tilt space:
    Lambda**(lambda) = max over x of (lambda . x - I(x))."""
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    if lam.shape[1] != rate.x_grid.shape[1]:
        lam = lam.T
    scores = lam @ rate.x_grid.T - rate.values[None, :]
    return scores.max(axis=1)


def duality_gap(lambdas, cgf_values, rate: RateFunctionGrid):
    """Most negative value of I(x) - (lambda . x - Lambda(lambda)) over all
    lattice pairs; exact conjugate duality means this is >= 0."""
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    if lam.shape[1] != rate.x_grid.shape[1]:
        lam = lam.T
    v = np.asarray(cgf_values, dtype=float)
    scores = rate.x_grid @ lam.T - v[None, :]
    return float(np.min(rate.values[:, None] - scores))


# ---------------------------------------------------------------------------
# Gaussian reference for constant diffusion coefficient.

@dataclass(frozen=True)
class GaussianReference:
    """Exact second-order structure of the constant-coefficient case."""

    kind: str
    sigma_c: float
    t: float
    v_R: float      # finite-window variance per unit length
    v: float        # window -> infinity limit

    def cgf(self, lam):
        return 0.5 * np.asarray(lam, dtype=float) ** 2 * self.v

    def cgf_finite(self, lam):
        return 0.5 * np.asarray(lam, dtype=float) ** 2 * self.v_R

    def rate(self, x):
        x = np.asarray(x, dtype=float)
        if self.v == 0.0:
            out = np.where(x == 0.0, 0.0, np.inf)
            return out if out.ndim else float(out)
        return x * x / (2.0 * self.v)


def gaussian_reference(kind, kernel, sigma_c, t, R):
    """Variance per unit length of the centered window integral when the
    diffusion coefficient is the constant sigma_c, plus its large-window
    limit: c^2 ||Gamma||_1 t (heat) or c^2 ||Gamma||_1 t^3/3 (wave)."""
    _check_kind(kind)
    if sigma_c == 0.0:
        return GaussianReference(kind=kind, sigma_c=0.0, t=t, v_R=0.0, v=0.0)
    c2 = sigma_c ** 2
    v_R = c2 * window_cross_moment(kind, kernel, t, (0.0, R), (0.0, R)) / R
    l1 = kernel_l1(kernel)
    if kind == HEAT:
        v = c2 * l1 * t
    else:
        v = c2 * l1 * t ** 3 / 3.0
    return GaussianReference(kind=kind, sigma_c=float(sigma_c), t=float(t),
                             v_R=float(v_R), v=float(v))


# ---------------------------------------------------------------------------
# Concave Lipschitz test functions (bounded above, strictly negative).

class ConstructionError(ValueError):
    """Test function failed its concavity or negativity validation."""


@dataclass(frozen=True)
class ConcaveTestFunction:
    """g: R^k -> (-inf, 0), concave and Lipschitz, with recorded constants.

    ``m_g`` is -min of g over [-1, 1]^k, the constant entering the generic
    lower bound on the normalized log exponential g-moment.
    """

    name: str
    k: int
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    sup_bound: float
    m_g: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.k == 1:
            x = x[:, None]
        return self.fn(x)


def _validate_concave(fn, k, rng, n_triples=1000):
    pts = rng.uniform(-2.0, 2.0, size=(n_triples, 2, k))
    x, y = pts[:, 0], pts[:, 1]
    mid = 0.5 * (x + y)
    lhs = fn(mid)
    rhs = 0.5 * (fn(x) + fn(y))
    bad = lhs < rhs - 1e-9
    if np.any(bad):
        raise ConstructionError("concavity check failed on midpoint triples")


def _grid_min(fn, k, n=2001):
    if k == 1:
        g = np.linspace(-1.0, 1.0, n)[:, None]
    elif k == 2:
        side = np.linspace(-1.0, 1.0, 201)
        a, b = np.meshgrid(side, side)
        g = np.column_stack([a.ravel(), b.ravel()])
    else:
        raise ConfigurationError("m_g grid minimization supports k <= 2")
    return float(np.min(fn(g)))


def make_test_function(preset, params=None, k=1):
    """Build a validated concave test function.

    Presets: ``negsqrt`` g(x) = -sqrt(1 + |x - x0|^2); ``negconst``
    g = -c; ``minaffine`` g(x) = min over rows of (a . x + b) with a slope
    set bracketing zero so g is bounded above.
    """
    params = dict(params or {})
    if preset == "negsqrt":
        x0 = np.atleast_1d(np.asarray(params.get("x0", 0.0), dtype=float))
        if x0.size == 1 and k > 1:
            x0 = np.full(k, float(x0[0]))

        def fn(x):
            d = np.asarray(x, dtype=float) - x0
            return -np.sqrt(1.0 + np.sum(d * d, axis=-1))

        lip = 1.0
        sup = -1.0
    elif preset == "negconst":
        c = abs(float(params.get("c", 1.0)))
        if c == 0.0:
            raise ConstructionError("negconst requires c != 0")
        fn = lambda x: np.full(np.asarray(x).shape[:-1], -c)
        lip = 0.0
        sup = -c
    elif preset == "minaffine":
        A = np.atleast_2d(np.asarray(params.get("slopes", [[0.6], [-0.7]]),
                                     dtype=float))
        b = np.asarray(params.get("offsets", [-0.5, -0.4]), dtype=float)
        if A.shape[1] != k or b.size != A.shape[0]:
            raise ConstructionError("minaffine slope/offset shapes inconsistent")
        fn = lambda x: np.min(np.asarray(x, dtype=float) @ A.T + b, axis=-1)
        lip = float(np.max(np.linalg.norm(A, axis=1)))
        # bounded above iff 0 is in the convex hull of the slopes; for k=1
        # that means the slopes bracket zero
        if k == 1 and not (A.min() <= 0.0 <= A.max()):
            raise ConstructionError("minaffine slopes must bracket zero")
        probe = np.linspace(-50, 50, 5001)[:, None] if k == 1 else None
        sup = float(np.max(fn(probe))) if probe is not None else 0.0
        if sup >= 0:
            raise ConstructionError("minaffine preset must stay negative")
    else:
        raise ConstructionError(f"unknown test-function preset {preset!r}")

    rng = np.random.default_rng(12345)
    _validate_concave(fn, k, rng)
    if float(np.max(fn(np.zeros((1, k))))) >= 0:
        raise ConstructionError("test function must be strictly negative")
    m_g = -_grid_min(fn, k)
    return ConcaveTestFunction(name=f"{preset}({params})", k=k, fn=fn,
                               lipschitz=lip, sup_bound=sup, m_g=m_g)


def shifted(g: ConcaveTestFunction, delta):
    """g + delta (delta < -sup keeps it negative); stays in class."""
    if g.sup_bound + delta >= 0:
        raise ConstructionError("shift would make the function nonnegative")
    return ConcaveTestFunction(
        name=f"{g.name}+{delta}", k=g.k, fn=lambda x: g.fn(x) + delta,
        lipschitz=g.lipschitz, sup_bound=g.sup_bound + delta,
        m_g=g.m_g - delta,
    )


def pointwise_min(g1: ConcaveTestFunction, g2: ConcaveTestFunction):
    """min(g1, g2); concavity and Lipschitz continuity are preserved."""
    if g1.k != g2.k:
        raise ConstructionError("dimension mismatch")
    return ConcaveTestFunction(
        name=f"min({g1.name},{g2.name})", k=g1.k,
        fn=lambda x: np.minimum(g1.fn(x), g2.fn(x)),
        lipschitz=max(g1.lipschitz, g2.lipschitz),
        sup_bound=min(g1.sup_bound, g2.sup_bound),
        m_g=max(g1.m_g, g2.m_g),
    )
