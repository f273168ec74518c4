"""Green's functions, spatial covariance kernels, and their decay analysis.

The two fundamental solutions handled here are the heat kernel
``(2*pi*t)**-0.5 * exp(-x**2/(2t))`` and the wave kernel
``0.5 * 1{|x| < t}``.  Covariance kernels are either the white-noise point
mass (L1 norm 1 by convention) or an even, nonnegative, integrable density
with a stretched-exponential tail envelope ``amplitude * exp(-rho*|x|**eta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import ndtr


class KernelError(ValueError):
    """Invalid covariance kernel or non-convergent kernel quadrature."""


HEAT = "heat"
WAVE = "wave"
_KINDS = (HEAT, WAVE)


def _check_kind(kind):
    if kind not in _KINDS:
        raise ValueError(f"unknown operator kind {kind!r}, expected one of {_KINDS}")


@dataclass(frozen=True)
class GreensFunction:
    """Fundamental solution of the heat or wave operator."""

    kind: str

    def __post_init__(self):
        _check_kind(self.kind)

    def __call__(self, t, x):
        return greens_eval(self.kind, t, x)

    def mass(self, t):
        return greens_mass(self.kind, t)


def greens_eval(kind, t, x):
    """Evaluate the Green's function at time ``t > 0`` and position ``x``.

    Heat: Gaussian density with variance ``t``.  Wave: ``0.5`` inside the
    light cone ``|x| < t``, ``0`` outside.
    """
    _check_kind(kind)
    if not t > 0:
        raise ValueError(f"greens_eval requires t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("greens_eval requires finite x")
    if kind == HEAT:
        out = np.exp(-x * x / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    else:
        out = np.where(np.abs(x) < t, 0.5, 0.0)
    return out if out.ndim else float(out)


def greens_mass(kind, t):
    """Total integral of the Green's function over x: 1 for heat, t for wave."""
    _check_kind(kind)
    if not t > 0:
        raise ValueError(f"greens_mass requires t > 0, got t={t}")
    return 1.0 if kind == HEAT else float(t)


def greens_selfconv(kind, u, tau):
    """(G(u) * G(u))(tau), the self-convolution of the Green's function.

    Heat: Gaussian density with variance ``2u``.  Wave: triangle
    ``(2u - |tau|)+ / 4``.
    """
    _check_kind(kind)
    if not u > 0:
        raise ValueError(f"greens_selfconv requires u > 0, got u={u}")
    tau = np.asarray(tau, dtype=float)
    if kind == HEAT:
        out = np.exp(-tau * tau / (4.0 * u)) / math.sqrt(4.0 * math.pi * u)
    else:
        out = 0.25 * np.maximum(2.0 * u - np.abs(tau), 0.0)
    return out if out.ndim else float(out)


def indicator_smoothed(kind, u, a, b, y):
    """(1_[a,b] * G(u))(y), closed form for both operators."""
    _check_kind(kind)
    y = np.asarray(y, dtype=float)
    if kind == HEAT:
        s = math.sqrt(u)
        out = ndtr((b - y) / s) - ndtr((a - y) / s)
    else:
        lo = np.maximum(y - u, a)
        hi = np.minimum(y + u, b)
        out = 0.5 * np.maximum(hi - lo, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CovarianceKernel:
    """Spatial covariance of the driving noise.

    ``white=True`` means the point-mass kernel (delta correlation in space).
    Otherwise ``shape`` is an even, nonnegative, integrable density with tail
    envelope ``amplitude * exp(-rho * |x|**eta)`` for ``|x| > threshold``.
    ``corr_length`` is the effective correlation length used for grid-padding
    policy (0 for white).
    """

    name: str
    white: bool = False
    shape: Callable[[np.ndarray], np.ndarray] | None = None
    rho: float = math.inf
    eta: float = math.inf
    amplitude: float = 0.0
    threshold: float = 0.0
    corr_length: float = 0.0
    _l1_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.white:
            return
        if self.shape is None:
            raise KernelError("density kernel requires a shape function")
        if not (self.rho > 0 and self.eta > 1):
            raise KernelError(
                f"density kernel needs rho > 0 and eta > 1, got rho={self.rho}, eta={self.eta}"
            )
        if self.amplitude < 0:
            raise KernelError("amplitude must be nonnegative")

    def __call__(self, x):
        if self.white:
            raise KernelError("white kernel has no pointwise density")
        return self.shape(np.asarray(x, dtype=float))

    def l1(self):
        return kernel_l1(self)

    @property
    def eta_eff(self):
        """2 ^ eta with the convention eta = inf for white noise."""
        return min(2.0, self.eta)


def kernel_l1(kernel):
    """L1 norm of the kernel.  White is 1 by convention; densities are
    integrated by adaptive quadrature to relative accuracy < 1e-8."""
    if kernel.white:
        return 1.0
    if "l1" in kernel._l1_cache:
        return kernel._l1_cache["l1"]
    f = lambda x: float(kernel.shape(np.asarray(x)))
    cut = max(kernel.threshold, kernel.corr_length, 1.0)
    try:
        core, err_core = integrate.quad(f, -cut, cut, epsabs=1e-12, epsrel=1e-10, limit=400)
        tail, err_tail = integrate.quad(f, cut, np.inf, epsabs=1e-12, epsrel=1e-10, limit=400)
    except Exception as exc:  # pragma: no cover - scipy failure path
        raise KernelError(f"kernel quadrature failed: {exc}") from exc
    total = core + 2.0 * tail
    err = err_core + 2.0 * err_tail
    if not np.isfinite(total) or total <= 0 or err > 1e-8 * max(total, 1e-30):
        raise KernelError(
            f"kernel not integrable to tolerance: integral={total}, quadrature error={err}"
        )
    kernel._l1_cache["l1"] = total
    return total


# ---------------------------------------------------------------------------
# Kernel presets addressable by name from the CLI configuration.

def _gauss_shape(x):
    return np.exp(-x * x)


def _stretched15_shape(x):
    return np.exp(-np.abs(x) ** 1.5)


def _triangle_shape(x):
    return np.maximum(1.0 - np.abs(x), 0.0)


WHITE = CovarianceKernel(name="white", white=True)

GAUSS = CovarianceKernel(
    name="gauss", shape=_gauss_shape, rho=1.0, eta=2.0, amplitude=1.0,
    threshold=0.0, corr_length=2.2,
)

STRETCHED15 = CovarianceKernel(
    name="stretched15", shape=_stretched15_shape, rho=1.0, eta=1.5, amplitude=1.0,
    threshold=0.0, corr_length=3.1,
)

# Self-convolution construction: 1_[-1/2,1/2] convolved with itself gives the
# triangle kernel, which is nonnegative definite by construction (its spectrum
# is the squared sinc).  Compactly supported, so any stretched-exponential
# envelope works; we record a Gaussian-type one valid beyond |x| = 1.
SELFCONV = CovarianceKernel(
    name="selfconv", shape=_triangle_shape, rho=1.0, eta=2.0, amplitude=1.0,
    threshold=1.0, corr_length=1.0,
)

KERNEL_PRESETS = {k.name: k for k in (WHITE, GAUSS, STRETCHED15, SELFCONV)}


def kernel_by_name(name):
    try:
        return KERNEL_PRESETS[name]
    except KeyError:
        raise KernelError(
            f"unknown kernel preset {name!r}; available: {sorted(KERNEL_PRESETS)}"
        ) from None


# ---------------------------------------------------------------------------
# Decay analysis.

@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log-magnitude against |x|**exponent."""

    rate: float
    exponent: float
    bound_respected: bool
    residual: float
    n_points: int


def _convolve_on_grid(f1, f2, x_grid, inner_half_width, n_inner=400):
    """(f1*f2)(x) on a grid by high-order quadrature over a symmetric window."""
    y, w = np.polynomial.legendre.leggauss(n_inner)
    y = y * inner_half_width
    w = w * inner_half_width
    vals = np.empty_like(np.asarray(x_grid, dtype=float))
    f2y = f2(y)
    for i, x in enumerate(np.asarray(x_grid, dtype=float)):
        vals[i] = np.sum(w * f1(x - y) * f2y)
    return vals


def convolution_decay_fit(f1, f2, x_grid, env1, env2, n_inner=400):
    """Convolve two decaying functions and fit the decay of the result.

    ``env1``/``env2`` are (C, alpha, beta, K) tail envelopes:
    |f(x)| <= C*exp(-alpha*|x|**beta) for |x| > K.  Asserts the two-sided
    convolution bound 2*(C1*||f2||_1 v C2*||f1||_1) *
    exp(-(a1/2**b1 ^ a2/2**b2)*|x|**(b1^b2)) for |x| > 2*(K1 v K2) and
    returns a least-squares decay fit on the outer half of the grid.
    """
    C1, a1, b1, K1 = env1
    C2, a2, b2, K2 = env2
    x_grid = np.asarray(x_grid, dtype=float)
    x_min_required = 2.0 * max(K1, K2)
    if x_grid.max() <= x_min_required:
        raise ValueError(
            f"x_grid must extend beyond 2*(K1 v K2) = {x_min_required}, "
            f"got max {x_grid.max()}"
        )
    l1_1 = integrate.quad(lambda x: abs(float(f1(np.asarray(x)))), -np.inf, np.inf,
                          limit=400)[0]
    l1_2 = integrate.quad(lambda x: abs(float(f2(np.asarray(x)))), -np.inf, np.inf,
                          limit=400)[0]
    half_width = max(x_grid.max(), 2.0 * max(K1, K2)) + 10.0
    conv = _convolve_on_grid(f1, f2, x_grid, half_width, n_inner)

    beta_min = min(b1, b2)
    alpha_eff = min(a1 / 2.0 ** b1, a2 / 2.0 ** b2)
    bound_amp = 2.0 * max(C1 * l1_2, C2 * l1_1)
    outside = np.abs(x_grid) > x_min_required
    bound = bound_amp * np.exp(-alpha_eff * np.abs(x_grid[outside]) ** beta_min)
    # tolerate quadrature noise at the underflow floor
    respected = bool(np.all(np.abs(conv[outside]) <= bound * (1 + 1e-8) + 1e-250))

    rate, exponent, residual, n_pts = _fit_decay(x_grid, conv, beta_min)
    return conv, DecayFit(rate=rate, exponent=exponent, bound_respected=respected,
                          residual=residual, n_points=n_pts)


def _fit_decay(x_grid, values, exponent):
    """OLS of log|values| against |x|**exponent on the outer half of the grid,
    discarding underflow-dominated points."""
    x = np.abs(np.asarray(x_grid, dtype=float))
    v = np.abs(np.asarray(values, dtype=float))
    cut = 0.5 * x.max()
    mask = (x >= cut) & (v > 1e-300)
    if mask.sum() < 3:
        raise ValueError("too few usable points for a decay fit")
    t = x[mask] ** exponent
    y = np.log(v[mask])
    A = np.vstack([np.ones_like(t), -t]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(res[0] / mask.sum())) if res.size else 0.0
    return float(coef[1]), float(exponent), resid, int(mask.sum())


def fit_decay_exponent(x_grid, values, candidates=None):
    """Pick the exponent e minimizing the OLS residual of
    log|v| ~ a - r*|x|**e over a candidate grid.  Returns (exponent, rate)."""
    if candidates is None:
        candidates = np.linspace(0.5, 3.0, 126)
    best = None
    for e in candidates:
        try:
            rate, _, resid, _ = _fit_decay(x_grid, values, e)
        except ValueError:
            continue
        if best is None or resid < best[2]:
            best = (float(e), rate, resid)
    if best is None:
        raise ValueError("decay exponent fit failed on all candidates")
    return best[0], best[1]


def smoothed_kernel_decay(kernel, T, x_max=None, n_points=60):
    """Decay record for (Gtilde * Gamma) with Gtilde(x) = exp(-x**2/(2T)).

    For white noise the convolution is Gtilde itself (exponent exactly 2).
    For density kernels the smoothed kernel is computed by quadrature and the
    decay exponent fitted; the expected value is min(2, eta).
    """
    if not T > 0:
        raise ValueError("smoothed_kernel_decay requires T > 0")
    if kernel.white:
        return DecayFit(rate=1.0 / (2.0 * T), exponent=2.0, bound_respected=True,
                        residual=0.0, n_points=0)
    if x_max is None:
        x_max = 4.0 * max(kernel.corr_length, math.sqrt(T)) + 6.0
    x_grid = np.linspace(0.5, x_max, n_points)
    gtilde = lambda x: np.exp(-x * x / (2.0 * T))
    half_width = x_max + 8.0 * max(kernel.corr_length, math.sqrt(T))
    conv = _convolve_on_grid(gtilde, kernel.shape, x_grid, half_width)
    expected = kernel.eta_eff
    exponent, rate = fit_decay_exponent(x_grid, conv)
    _, _, resid, n_pts = _fit_decay(x_grid, conv, exponent)
    return DecayFit(rate=rate, exponent=exponent, bound_respected=rate > 0,
                    residual=resid, n_points=n_pts)


def wave_domination_constant(T):
    """Smallest C with 0.5*1{|x|<t} <= C * heat kernel(t, x) for t in (0, T]."""
    return 0.5 * math.sqrt(2.0 * math.pi * T) * math.exp(T / 2.0)


# ---------------------------------------------------------------------------
# Space-time second-moment quadrature shared by the variance oracle and the
# quadratic-variation bounds.

def _overlap_breaks(w1, w2):
    """Cross-correlation of two interval indicators: returns breakpoints of
    the piecewise-linear function tau -> |w1 ∩ (w2 - tau)|."""
    a1, b1 = w1
    a2, b2 = w2
    pts = np.array(sorted([a2 - b1, min(a2 - a1, b2 - b1), max(a2 - a1, b2 - b1),
                           b2 - a1]))
    return pts


def _overlap_eval(w1, w2, tau):
    a1, b1 = w1
    a2, b2 = w2
    tau = np.asarray(tau, dtype=float)
    lo = np.maximum(a1, a2 - tau)
    hi = np.minimum(b1, b2 - tau)
    return np.maximum(hi - lo, 0.0)


def _heat_lin_gauss_piece(a, b, t0, t1, var):
    """Integral of (a + b*tau) * N(tau; 0, var) over [t0, t1], closed form."""
    s = math.sqrt(var)
    phi = lambda z: math.exp(-z * z / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    term_a = a * (ndtr(t1 / s) - ndtr(t0 / s))
    term_b = -b * var * (phi(t1) - phi(t0))
    return term_a + term_b


def _integrate_overlap_heat(w1, w2, var):
    """∫ overlap(tau) N(tau;0,var) dtau exactly from the trapezoid pieces."""
    pts = _overlap_breaks(w1, w2)
    total = 0.0
    for t0, t1 in zip(pts[:-1], pts[1:]):
        if t1 <= t0:
            continue
        v0 = float(_overlap_eval(w1, w2, t0))
        v1 = float(_overlap_eval(w1, w2, t1))
        b = (v1 - v0) / (t1 - t0)
        a = v0 - b * t0
        total += _heat_lin_gauss_piece(a, b, t0, t1, var)
    return total


def _integrate_overlap_wave(w1, w2, u):
    """∫ overlap(tau) * (2u-|tau|)+/4 dtau, exact (piecewise quadratic)."""
    pts = list(_overlap_breaks(w1, w2)) + [-2.0 * u, 0.0, 2.0 * u]
    pts = np.array(sorted(set(pts)))
    pts = pts[(pts >= min(pts.min(), -2 * u))]
    total = 0.0
    tri = lambda tau: 0.25 * max(2.0 * u - abs(tau), 0.0)
    for t0, t1 in zip(pts[:-1], pts[1:]):
        if t1 <= t0:
            continue
        tm = 0.5 * (t0 + t1)
        f0 = float(_overlap_eval(w1, w2, t0)) * tri(t0)
        fm = float(_overlap_eval(w1, w2, tm)) * tri(tm)
        f1 = float(_overlap_eval(w1, w2, t1)) * tri(t1)
        total += (t1 - t0) / 6.0 * (f0 + 4.0 * fm + f1)  # Simpson, exact here
    return total


def _smoothed_selfconv_colored(kind, u, kernel, tau):
    """(K_u * Gamma)(tau) where K_u = G(u)*G(u), by Gauss-Legendre quadrature."""
    if kind == HEAT:
        half = 6.0 * math.sqrt(2.0 * u)
    else:
        half = 2.0 * u
    y, w = np.polynomial.legendre.leggauss(160)
    y = y * half
    w = w * half
    K = greens_selfconv(kind, u, y)
    tau = np.asarray(tau, dtype=float)
    return np.array([np.sum(w * K * kernel.shape(t - y)) for t in np.atleast_1d(tau)])


def window_cross_moment(kind, kernel, t, w1, w2):
    """∫_0^t ∫∫ (1_w1 * G(t-s))(y) (1_w2 * G(t-s))(z) Gamma(y-z) dy dz ds.

    This is the covariance of the centered window integrals F_w1(t), F_w2(t)
    for unit constant diffusion coefficient, and the quadratic-variation
    integral when w1 = w2.
    """
    _check_kind(kind)
    if not t > 0:
        raise ValueError("window_cross_moment requires t > 0")

    if kernel.white:
        if kind == HEAT:
            f = lambda s: _integrate_overlap_heat(w1, w2, 2.0 * (t - s))
        else:
            f = lambda s: _integrate_overlap_wave(w1, w2, t - s)
        val, _ = integrate.quad(f, 0.0, t, epsabs=1e-11, epsrel=1e-9, limit=300)
        return val

    # Colored: tau-grid quadrature of overlap * (K_u * Gamma) for each s.
    pts = _overlap_breaks(w1, w2)
    margin = 4.0 * kernel.corr_length + (6.0 * math.sqrt(2 * t) if kind == HEAT else 2 * t)
    lo, hi = pts.min() - margin, pts.max() + margin
    ytau, wtau = np.polynomial.legendre.leggauss(320)
    tau = 0.5 * (hi - lo) * ytau + 0.5 * (hi + lo)
    wtau = 0.5 * (hi - lo) * wtau
    ov = _overlap_eval(w1, w2, tau)

    def f(s):
        sk = _smoothed_selfconv_colored(kind, t - s, kernel, tau)
        return float(np.sum(wtau * ov * sk))

    val, _ = integrate.quad(f, 0.0, t, epsabs=1e-9, epsrel=1e-7, limit=100)
    return val
