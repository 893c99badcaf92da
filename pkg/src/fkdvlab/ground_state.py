"""Solitary-wave profiles: Petviashvili solver, speed rescaling, decay fits,
constrained energy minimisation and resolvent-kernel profiles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateInitError,
    DomainError,
    FlowError,
    ResolutionError,
)
from .params import ModelParams
from .spectral import (
    Field,
    Grid,
    dealiased_power,
    derivative,
    l2_norm,
    riesz_symbol,
    translate,
)

log = logging.getLogger(__name__)


@dataclass
class GroundState:
    params: ModelParams
    Q: Field
    residual: float
    iterations: int
    peak: tuple[tuple[float, ...], float]
    evenness: float = 0.0
    min_value: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.Q.grid


def _resolvent_symbol(grid: Grid, p: ModelParams) -> np.ndarray:
    return p.c + riesz_symbol(grid, p.alpha)


def profile_residual(Q: Field, p: ModelParams) -> float:
    """Relative L^2 residual of c Q + D^alpha Q - Q^m/m (product dealiased)."""
    sym = _resolvent_symbol(Q.grid, p)
    nl = dealiased_power(Q, p.m).hat / p.m
    lin = sym * Q.hat * Q.grid.nyquist_mask
    w = Q.grid.half_weights
    num = np.sum(w * np.abs(lin - nl) ** 2)
    den = np.sum(w * np.abs(nl) ** 2)
    return float(np.sqrt(num / den)) if den > 0 else math.inf


def default_guess(grid: Grid) -> Field:
    """Centered Gaussian bump of unit height and width L/20."""
    width = [length / 20.0 for length in grid.L]
    r2 = sum((x / w) ** 2 for x, w in zip(grid.coords, width))
    return Field(grid, np.exp(-r2))


def peak_location(f: Field) -> tuple[tuple[float, ...], float]:
    """Sub-grid peak by a three-point parabola along each axis."""
    grid = f.grid
    v = f.values
    idx = np.unravel_index(int(np.argmax(v)), v.shape)
    loc = []
    top = float(v[idx])
    for ax in range(grid.d):
        n = grid.N[ax]
        lo = list(idx)
        hi = list(idx)
        lo[ax] = (idx[ax] - 1) % n
        hi[ax] = (idx[ax] + 1) % n
        fm, f0, fp = v[tuple(lo)], v[idx], v[tuple(hi)]
        curv = fm - 2 * f0 + fp
        off = 0.5 * (fm - fp) / curv if curv < 0 else 0.0
        loc.append(float(grid.axes[ax][idx[ax]] + off * grid.h[ax]))
        top = max(top, float(f0 - 0.25 * (fm - fp) * off))
    return tuple(loc), top


def recentre(f: Field, iterations: int = 3) -> Field:
    """Translate ``f`` so that its maximum sits at the origin."""
    for _ in range(iterations):
        loc, _ = peak_location(f)
        if max(abs(z) for z in loc) < 1e-13:
            break
        f = translate(f, loc)
    return f


def evenness_defect(f: Field) -> float:
    """Relative L^2 distance between f(x) and f(-x) about the origin."""
    v = f.values
    refl = v
    for ax in range(v.ndim):
        refl = np.roll(np.flip(refl, axis=ax), 1, axis=ax)
    norm = np.linalg.norm(v)
    return float(np.linalg.norm(v - refl) / norm) if norm > 0 else 0.0


def petviashvili_solve(
    p: ModelParams,
    grid: Grid,
    init: Field | None = None,
    tol: float = 1e-10,
    max_iter: int = 2000,
    recentre_peak: bool = True,
) -> GroundState:
    """Ground state of c Q + D^alpha Q = Q^m/m by stabilised fixed-point iteration."""
    u = init if init is not None else default_guess(grid)
    if u.grid != grid:
        raise ConfigurationError("initial guess lives on a different grid")
    if integral_sign(u) <= 0:
        raise DegenerateInitError("initial guess needs a positive mean")
    sym = _resolvent_symbol(grid, p) * grid.nyquist_mask
    inv = np.divide(1.0, sym, out=np.zeros_like(sym), where=sym > 0)
    gamma = p.m / (p.m - 1.0)
    w = grid.half_weights
    hat = u.hat * grid.nyquist_mask
    best = math.inf
    stall = 0
    res = math.inf
    for it in range(1, max_iter + 1):
        q = Field.from_hat(grid, hat)
        nl = dealiased_power(q, p.m).hat / p.m
        lin = sym * hat
        lin_q = np.sum(w * (lin * np.conj(hat)).real)
        nl_q = np.sum(w * (nl * np.conj(hat)).real)
        den = np.sum(w * np.abs(nl) ** 2)
        if not (nl_q > 0 and den > 0) or q.sup() < 1e-12:
            raise DegenerateInitError(f"iteration collapsed at step {it}")
        res = float(np.sqrt(np.sum(w * np.abs(lin - nl) ** 2) / den))
        if res < tol:
            break
        if res < 0.5 * best:
            best, stall = res, 0
        else:
            best = min(best, res)
            stall += 1
        if stall > 200:
            raise ConvergenceError(f"stagnated at residual {res:.3e} after {it} iterations")
        S = lin_q / nl_q
        hat = S**gamma * nl * inv
        if not np.all(np.isfinite(hat)):
            raise ConvergenceError("iteration diverged")
    else:
        raise ConvergenceError(f"residual {res:.3e} above {tol:.1e} after {max_iter} iterations")
    Q = Field.from_hat(grid, hat)
    if recentre_peak:
        Q = recentre(Q)
    return _finish(p, Q, it)


def integral_sign(u: Field) -> float:
    return float(np.sum(u.values))


def _finish(p: ModelParams, Q: Field, iterations: int) -> GroundState:
    res = profile_residual(Q, p)
    return GroundState(
        params=p,
        Q=Q,
        residual=res,
        iterations=iterations,
        peak=peak_location(Q),
        evenness=evenness_defect(Q),
        min_value=float(Q.values.min()),
    )


# -- speed rescaling -----------------------------------------------------------

def _interpolate_axis(vals: np.ndarray, axis: int, grid_axis: np.ndarray, length: float, points: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Band-limited interpolant of ``vals`` along ``axis`` evaluated at ``points``.

    Evaluates the real-FFT series directly in chunks of points, Nyquist dropped.
    """
    n = grid_axis.size
    hat = np.moveaxis(np.fft.rfft(vals, axis=axis), axis, 0)
    hat[n // 2] = 0.0
    hat[1:] *= 2.0
    xi = 2 * np.pi / length * np.arange(hat.shape[0])
    out = np.empty((points.size,) + hat.shape[1:])
    flat = hat.reshape(hat.shape[0], -1)
    for i in range(0, points.size, chunk):
        ph = np.exp(1j * np.outer(points[i : i + chunk] - grid_axis[0], xi))
        out[i : i + chunk] = (ph @ flat).real.reshape((-1,) + hat.shape[1:]) / n
    return np.moveaxis(out, 0, axis)


def tail_anchor(Q: Field) -> tuple[float, float]:
    """Radius and value of the last sample before the left box edge along x1."""
    grid = Q.grid
    idx = [grid.N[k] // 2 for k in range(grid.d)]
    idx[0] = 1
    return float(-grid.axes[0][1]), float(Q.values[tuple(idx)])


def tail_value(Q: Field, p: ModelParams, r: np.ndarray) -> np.ndarray:
    """Decay-law continuation of Q beyond the box, continuous at the anchor.

    Power law |x|^-(d+alpha) for alpha < 2, exponential for alpha = 2.
    """
    rb, qb = tail_anchor(Q)
    r = np.maximum(r, rb)
    if p.alpha >= 2:
        return qb * np.exp(-math.sqrt(p.c) * (r - rb))
    return qb * (rb / r) ** (Q.grid.d + p.alpha)


def resample_scaled(Q: Field, p: ModelParams, amplitude: float, stretch: float, tail_tol: float = 1e-12) -> Field:
    """Samples of amplitude * Q(stretch * x) from the band-limited interpolant.

    Points mapped outside the box use a decay-law continuation of the tail.
    Stretching by more than 1 raises ResolutionError when the relative
    spectral energy pushed past the grid band exceeds ``tail_tol``.
    """
    grid = Q.grid
    if stretch > 1:
        # the stretched profile needs the frequencies up to stretch * band
        band = grid.xi_abs <= grid.max_wavenumber / stretch
        w = grid.half_weights
        total = np.sum(w * np.abs(Q.hat) ** 2)
        lost = np.sum(w * np.abs(Q.hat) ** 2 * ~band)
        if total > 0 and lost / total > tail_tol:
            raise ResolutionError(
                f"stretched profile under-resolved: spectral tail {lost / total:.2e}"
            )
    vals = Q.values
    inside_masks = []
    for ax in range(grid.d):
        pts = stretch * grid.axes[ax]
        inside = np.abs(pts) <= 0.5 * grid.L[ax] - grid.h[ax]
        new = np.zeros_like(vals)
        sel = [slice(None)] * grid.d
        sel[ax] = inside
        new[tuple(sel)] = _interpolate_axis(vals, ax, grid.axes[ax], grid.L[ax], pts[inside])
        vals = new
        s = [1] * grid.d
        s[ax] = -1
        inside_masks.append(inside.reshape(s))
    inside_all = np.ones(grid.shape, dtype=bool)
    for msk in inside_masks:
        inside_all = inside_all & msk
    r = stretch * grid.radius
    if not np.all(inside_all):
        vals = np.where(inside_all, vals, tail_value(Q, p, r))
    return Field(grid, amplitude * vals)


def rescale(gs: GroundState, c_new: float, polish: bool = True, tol: float = 1e-10) -> GroundState:
    """Q_c(x) = (c/c0)^(1/(m-1)) Q_c0((c/c0)^(1/alpha) x) on the same grid.

    With ``polish`` the resampled profile seeds a short Petviashvili run so the
    result is the discrete ground state at the new speed.
    """
    if not c_new > 0:
        raise DomainError(f"speed must be positive, got {c_new}")
    p = gs.params
    ratio = c_new / p.c
    pn = p.with_speed(c_new)
    if ratio == 1.0:
        return GroundState(pn, gs.Q, gs.residual, gs.iterations, gs.peak, gs.evenness, gs.min_value)
    guess = resample_scaled(gs.Q, p, ratio ** (1.0 / (p.m - 1)), ratio ** (1.0 / p.alpha))
    if polish:
        return petviashvili_solve(pn, gs.grid, init=guess, tol=tol)
    return _finish(pn, guess, 0)


# -- decay fits ----------------------------------------------------------------

@dataclass
class DecayFit:
    window: tuple[float, float]
    exponent: float
    target: float
    r2: float
    constant: float = math.nan
    flagged: bool = False
    plateau: float = math.nan
    plateau_slope: float = math.nan
    bounded_ratio: float = math.nan

    @property
    def relative_error(self) -> float:
        return abs(self.exponent - self.target) / abs(self.target)


def default_window(grid: Grid) -> tuple[float, float]:
    """Far-field window: beyond the core, inside the first quarter-period in 1D.

    In 2D the core is wide relative to a desk-size box and the next-order tail
    correction is still visible at L/8, so the window moves out to (L/5, 0.4 L);
    the periodized fit carries the image sum there.
    """
    L = min(grid.L)
    if grid.d >= 2:
        return L / 5.0, 0.4 * L
    return max(5.0, L / 40.0), L / 8.0


def axis_profile(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Samples along the positive x1 axis (other coordinates at the origin)."""
    grid = f.grid
    idx = [grid.N[k] // 2 for k in range(grid.d)]
    idx[0] = slice(grid.N[0] // 2, None)
    return grid.axes[0][grid.N[0] // 2 :], f.values[tuple(idx)]


def periodized_power(r: np.ndarray, exponent: float, L: float, d: int = 1, parity: int = 1, images: int | None = None) -> np.ndarray:
    """sum over lattice shifts k of s(y) |y|^exponent at y = (r + k1 L, k2 L, ...).

    ``parity = -1`` attaches the sign of the x1 component, as for odd tails.
    """
    K = images if images is not None else (200 if d == 1 else 30)
    ks = np.arange(-K, K + 1)
    y1 = r[:, None] + ks[None, :] * L
    if d == 1:
        s = np.sign(y1) if parity < 0 else 1.0
        return np.sum(s * np.abs(y1) ** exponent, axis=1)
    out = np.zeros_like(r, dtype=float)
    for k2 in ks:
        rad = np.sqrt(y1**2 + (k2 * L) ** 2)
        s = np.sign(y1) if parity < 0 else 1.0
        out += np.sum(s * rad**exponent, axis=1)
    return out


def fit_power_law(
    r: np.ndarray,
    v: np.ndarray,
    window,
    target: float,
    floor: float = 1e-13,
    period: float | None = None,
    d: int = 1,
    parity: int = 1,
) -> DecayFit:
    """Fit |v| ~ C r^p on the window in log-log coordinates.

    With ``period`` the model is the lattice sum of C |y|^p over the periodic
    images, so the slope is not biased by the neighbouring copies.
    """
    from scipy.optimize import minimize_scalar

    lo, hi = window
    sel = (r >= lo) & (r <= hi)
    flagged = False
    above = np.abs(v) > floor
    if np.any(sel & ~above):
        flagged = True
        cut = r[sel & ~above].min()
        sel = sel & (r < cut)
        hi = float(cut)
    if np.count_nonzero(sel) < 4:
        raise DomainError("decay window holds too few samples above the round-off floor")
    rs = r[sel]
    y = np.log(np.abs(v[sel]))
    if period is None:
        x = np.log(rs)
        A = np.vstack([x, np.ones_like(x)]).T
        (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
        pred = A @ np.array([slope, icpt])
    else:
        def model(p):
            return np.log(np.abs(periodized_power(rs, p, period, d, parity)))

        def cost(p):
            ls = model(p)
            return float(np.sum((y - ls - np.mean(y - ls)) ** 2))

        res = minimize_scalar(cost, bounds=(-8.0, -0.2), method="bounded", options={"xatol": 1e-9})
        slope = float(res.x)
        ls = model(slope)
        icpt = float(np.mean(y - ls))
        pred = ls + icpt
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0
    return DecayFit((float(lo), float(hi)), float(slope), target, float(r2), float(np.exp(icpt)), flagged)


def decay_fit(f: Field, derivative_order: int, alpha: float, window=None, periodic: bool = True) -> DecayFit:
    """Tail exponent of d^k f/dx1^k along the x1 axis against -(d + alpha + k).

    By default the fit models the periodic images of the tail.
    """
    if not 0 < alpha < 2:
        raise DomainError("power-law decay fits need 0 < alpha < 2")
    g = derivative(f, 0, derivative_order) if derivative_order else f
    r, v = axis_profile(g)
    window = window or default_window(f.grid)
    target = -(f.grid.d + alpha + derivative_order)
    period = f.grid.L[0] if periodic else None
    parity = -1 if derivative_order % 2 else 1
    return fit_power_law(r, v, window, target, period=period, d=f.grid.d, parity=parity)


# -- constrained minimisation --------------------------------------------------

def energy_gradient(v: Field, p: ModelParams) -> Field:
    """L^2 gradient of the energy, D^alpha v - v^m/m."""
    grid = v.grid
    hat = riesz_symbol(grid, p.alpha) * v.hat - dealiased_power(v, p.m).hat / p.m
    return Field.from_hat(grid, hat * grid.nyquist_mask)


@dataclass
class MinimizerResult:
    v: Field
    energy: float
    multiplier: float
    gradient_norm: float
    iterations: int
    energies: list = field(default_factory=list)


def constrained_minimize(
    q: float,
    p: ModelParams,
    grid: Grid,
    init: Field | None = None,
    tol: float = 1e-8,
    h0: float = 0.1,
    max_iter: int = 20000,
) -> MinimizerResult:
    """Minimise the energy on the sphere M[v] = q by a projected gradient flow.

    Each step is preconditioned by (mu + D^alpha)^(-1), where mu is the current
    Lagrange multiplier, then the iterate is rescaled back onto the sphere.
    The step starts at ``h0``, halves while the energy increases and grows
    again after accepted steps.
    """
    if not p.criticality.subcritical:
        raise DomainError("constrained minimisation needs the subcritical class")
    v = init if init is not None else default_guess(grid)
    v = Field.from_hat(grid, v.hat * grid.nyquist_mask)
    v = v * math.sqrt(q / fn.mass(v))
    E = fn.energy(v, p)
    h = h0
    Dsym = riesz_symbol(grid, p.alpha)
    energies = [E]
    gnorm = math.inf
    mu = 1.0
    for it in range(1, max_iter + 1):
        g = energy_gradient(v, p)
        mu = -float(np.sum(g.values * v.values)) / float(np.sum(v.values**2))
        pg = g + mu * v
        gnorm = l2_norm(pg) / l2_norm(v)
        if gnorm < tol:
            break
        shift = max(mu, 1e-3)
        step_hat = pg.hat / (shift + Dsym)
        for _ in range(60):
            trial = Field.from_hat(grid, (v.hat - h * step_hat) * grid.nyquist_mask)
            trial = trial * math.sqrt(q / fn.mass(trial))
            Et = fn.energy(trial, p)
            if Et <= E + 1e-14 * abs(E):
                break
            h *= 0.5
        else:
            raise FlowError(f"energy increased for every step size at iteration {it}")
        v, E = trial, Et
        energies.append(E)
        h = min(2.0 * h, 1.0)
    else:
        raise FlowError(f"projected gradient {gnorm:.2e} above {tol:.0e} after {max_iter} steps")
    return MinimizerResult(v, E, mu, gnorm, it, energies)


def speed_for_mass(q: float, gs: GroundState) -> float:
    """The c with M[Q_c] = q given a reference ground state, via mass scaling."""
    p = gs.params
    expo = 2.0 / (p.m - 1) - p.d / p.alpha
    if expo == 0:
        raise DomainError("mass is speed-independent at the critical power")
    return p.c * (q / fn.mass(gs.Q)) ** (1.0 / expo)


# -- resolvent kernel ----------------------------------------------------------

def band_filter(grid: Grid, order: int = 16) -> np.ndarray:
    """exp(-36 (|xi|/xi_max)^order): 1 near the origin, round-off level at the band edge."""
    return np.exp(-36.0 * (grid.xi_abs / grid.max_wavenumber) ** order)


def kernel_field(grid: Grid, symbol: np.ndarray, filtered: bool = True) -> Field:
    """Samples of the inverse Fourier transform of ``symbol`` (R^d normalisation).

    Symbols decaying like |xi|^-alpha leave a truncation error of size
    xi_max^-alpha / |x| that swamps algebraic tails; the smooth band filter
    removes it without touching the small-|xi| singularity that sets the tail.
    """
    if filtered:
        symbol = symbol * band_filter(grid)
    vals = grid.ifft(symbol * grid.nyquist_mask) * (grid.size / grid.volume)
    vals = np.fft.fftshift(vals)
    return Field(grid, vals)


def resolvent_kernel(alpha: float, lam: float, grid: Grid, filtered: bool = True) -> Field:
    return kernel_field(grid, 1.0 / (lam + riesz_symbol(grid, alpha)), filtered)


def composite_kernel(alpha: float, lam: float, grid: Grid, rho: int = 1, l: int = 1) -> Field:
    """Kernel of |xi|^(alpha l - 2 rho) xi_1^2 / (lam + |xi|^alpha)^(1 + rho)."""
    xi = grid.xi_abs
    k1 = grid.wavenumbers[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.where(xi > 0, xi ** (alpha * l - 2 * rho) * k1**2, 0.0)
    return kernel_field(grid, sym / (lam + xi**alpha) ** (1 + rho))


def kernel_tail_constant(alpha: float, lam: float, d: int = 1) -> float:
    """Leading far-field constant of the resolvent kernel, lim |x|^(d+alpha) G(x)."""
    from scipy.special import gamma

    return -(2**alpha) * gamma((d + alpha) / 2) / (math.pi ** (d / 2) * gamma(-alpha / 2)) / lam**2


def kernel_window(grid: Grid) -> tuple[float, float]:
    """Kernel tails are fitted with the plain law, so the window stays far inside the box."""
    hi = min(grid.L) / 16.0
    return max(5.0, hi / 10.0), hi


def bessel_kernel_profile(
    alpha: float, lam: float, grid: Grid, window=None, composite: bool = False
) -> DecayFit:
    """Tail fit of the kernel of (lam + D^alpha)^(-1) or of the composite symbol."""
    if not lam > 0:
        raise DomainError("lam must be positive")
    if not 0 < alpha < 2:
        raise DomainError("kernel tails are algebraic only for 0 < alpha < 2")
    G = composite_kernel(alpha, lam, grid) if composite else resolvent_kernel(alpha, lam, grid)
    r, v = axis_profile(G)
    d = grid.d
    window = window or kernel_window(grid)
    fit = fit_power_law(r, v, window, -(d + alpha))
    lo, hi = fit.window
    sel = (r >= lo) & (r <= hi)
    scaled = np.abs(v[sel]) * r[sel] ** (d + alpha)
    x = np.log(r[sel])
    fit.plateau_slope = float(np.polyfit(x, np.log(scaled), 1)[0])
    fit.plateau = float(np.sign(v[sel][-1]) * np.exp(np.mean(np.log(scaled))))
    fit.bounded_ratio = float(np.max(np.abs(v[r > 0]) * (1 + r[r > 0] ** 2) ** ((d + alpha) / 2)))
    if abs(fit.plateau_slope) > 0.1:
        fit.flagged = True
    return fit
