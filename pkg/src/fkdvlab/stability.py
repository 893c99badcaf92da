"""Modulation fits, tube distances, the perturbation equation and the virial
functional, plus the stability and instability experiment drivers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .errors import (
    CriticalityClassError,
    CutoffLeakError,
    DomainError,
    OutOfTubeError,
    TubeTooLargeError,
)
from .evolution import Trajectory, default_dt, evolve
from .ground_state import GroundState, resample_scaled, tail_anchor
from .linearized import LinearizedOperator, SpectralReport, scaling_generator
from .params import ModelParams
from .spectral import (
    Field,
    Grid,
    dealiaser,
    derivative,
    l2_norm,
    negative_sobolev_norm,
    riesz_symbol,
    sobolev_norm,
    translate,
)

log = logging.getLogger(__name__)


def _weights(grid: Grid, s: float) -> np.ndarray:
    return grid.half_weights * (1.0 + grid.xi_abs**2) ** s


def _phase(grid: Grid, z) -> np.ndarray:
    return np.exp(1j * sum(k * float(zj) for k, zj in zip(grid.wavenumbers, z)))


def _pairing(grid: Grid, a_hat: np.ndarray, b_hat: np.ndarray, s: float = 0.0) -> float:
    return float(np.sum(_weights(grid, s) * (a_hat * np.conj(b_hat)).real) * grid.cell / grid.size)


# -- modulation ----------------------------------------------------------------

@dataclass
class TranslationFit:
    z: np.ndarray
    eps: Field
    ortho_residuals: np.ndarray
    iterations: int


def _is_even_in_transverse(u: Field) -> bool:
    if u.grid.d == 1:
        return True
    v = u.values
    refl = np.roll(np.flip(v, axis=1), 1, axis=1)
    return bool(np.linalg.norm(v - refl) <= 1e-12 * max(np.linalg.norm(v), 1e-300))


def correlation_peak(u: Field, Q: Field, s: float = 0.0) -> np.ndarray:
    """Grid shift z maximising <u(. + z), Q>_{H^s}."""
    grid = u.grid
    corr = grid.ifft(_weights(grid, s) / grid.half_weights * u.hat * np.conj(Q.hat))
    idx = np.unravel_index(int(np.argmax(corr)), corr.shape)
    z = []
    for ax, i in enumerate(idx):
        n = grid.N[ax]
        z.append((i if i < n // 2 else i - n) * grid.h[ax])
    return np.array(z)


def fit_translation(
    u: Field,
    gs: GroundState,
    z_init=None,
    cylindrical: bool | None = None,
    tol: float = 1e-13,
    max_iter: int = 50,
) -> TranslationFit:
    """Newton solve of <u(. + z) - Q, d_j Q> = 0 for the translation z.

    The Jacobian entries are <d_l u(. + z), d_j Q>, which equal
    ||d_j Q||^2 delta_jl - <eps, d_j d_l Q>. Returns z and eps = u(. + z) - Q.
    """
    grid = u.grid
    d = grid.d
    Q = gs.Q
    if cylindrical is None:
        cylindrical = _is_even_in_transverse(u)
    axes = [0] if cylindrical else list(range(d))
    z = np.zeros(d) if z_init is None else np.array(np.atleast_1d(z_init), dtype=float)
    if z.size < d:
        z = np.concatenate([z, np.zeros(d - z.size)])
    if z_init is None:
        z = correlation_peak(u, Q)
        if cylindrical:
            z[1:] = 0.0
    ik = [1j * grid.wavenumbers[j] * grid.nyquist_mask for j in range(d)]
    dq_hat = [ik[j] * Q.hat for j in range(d)]
    dq_norm2 = [_pairing(grid, h, h) for h in dq_hat]
    scale = l2_norm(u) * max(math.sqrt(v) for v in dq_norm2)
    uh = u.hat * grid.nyquist_mask
    for it in range(1, max_iter + 1):
        shifted = uh * _phase(grid, z)
        g = np.array([_pairing(grid, shifted, dq_hat[j]) for j in axes])
        J = np.array([[_pairing(grid, ik[l] * shifted, dq_hat[j]) for l in axes] for j in axes])
        if abs(np.linalg.det(J)) < (0.1 ** len(axes)) * np.prod([dq_norm2[j] for j in axes]):
            raise TubeTooLargeError("modulation Jacobian is near-singular")
        step = np.linalg.solve(J, -g)
        z[axes] += step
        if np.max(np.abs(step)) < 1e-12 * max(grid.L) and np.max(np.abs(g)) <= tol * scale * 10:
            break
    else:
        raise OutOfTubeError(f"translation fit did not converge in {max_iter} iterations")
    shifted = uh * _phase(grid, z)
    eps = Field.from_hat(grid, shifted - Q.hat * grid.nyquist_mask)
    ortho = np.array([abs(_pairing(grid, eps.hat, dq_hat[j])) for j in range(d)])
    return TranslationFit(z, eps, ortho, it)


def tube_distance(u: Field, gs: GroundState, s: float | None = None, return_shift: bool = False):
    """inf over z of ||u - Q(. + z)||_{H^s}, s defaulting to alpha/2.

    A cross-correlation over all grid shifts picks the basin; golden-section
    searches along each axis refine the shift, and the distance is evaluated
    directly from the difference spectrum to avoid cancellation.
    """
    from scipy.optimize import minimize_scalar

    grid = u.grid
    Q = gs.Q
    s = gs.params.alpha / 2 if s is None else s
    uh = u.hat * grid.nyquist_mask
    qh = Q.hat * grid.nyquist_mask
    w = _weights(grid, s)
    z = correlation_peak(u, Q, s)

    def dist2(zz):
        diff = uh * _phase(grid, zz) - qh
        return float(np.sum(w * np.abs(diff) ** 2) * grid.cell / grid.size)

    for _ in range(2 if grid.d > 1 else 1):
        for ax in range(grid.d):
            h = grid.h[ax]

            def along(t, ax=ax):
                zz = z.copy()
                zz[ax] = t
                return dist2(zz)

            z0 = z[ax]
            res = minimize_scalar(along, bracket=(z0 - h, z0, z0 + h), method="golden", tol=1e-10)
            if res.fun <= along(z0):
                z[ax] = res.x
    d = math.sqrt(max(dist2(z), 0.0))
    return (d, z) if return_shift else d


@dataclass
class ModulationTrack:
    times: np.ndarray
    z: np.ndarray
    eps: list
    eps_l2: np.ndarray
    eps_hs: np.ndarray
    ortho_residuals: np.ndarray
    zdot: np.ndarray
    max_jump: float = 0.0


def centered_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Second-order differences (one-sided at the ends); handles uneven spacing."""
    return np.gradient(values, times, axis=0, edge_order=2)


def track_modulation(snapshots, times, gs: GroundState, max_jump_cells: float = 5.0) -> ModulationTrack:
    """Fit the translation along a sequence of snapshots, seeding each fit from
    the previous shift advanced at speed c."""
    times = np.asarray(times, dtype=float)
    grid = gs.grid
    c = gs.params.c
    zs, eps, ortho = [], [], []
    z_prev = None
    t_prev = None
    for t, u in zip(times, snapshots):
        guess = None if z_prev is None else z_prev + np.r_[c * (t - t_prev), np.zeros(grid.d - 1)]
        fit = fit_translation(u, gs, z_init=guess)
        zs.append(fit.z)
        eps.append(fit.eps)
        ortho.append(fit.ortho_residuals)
        z_prev, t_prev = fit.z, t
    zs = np.array(zs)
    alpha = gs.params.alpha
    eps_l2 = np.array([l2_norm(e) for e in eps])
    eps_hs = np.array([sobolev_norm(e, alpha / 2) for e in eps])
    zdot = centered_derivative(times, zs) if len(times) > 2 else np.zeros_like(zs)
    jumps = np.abs(np.diff(zs[:, 0]) - c * np.diff(times)) if len(times) > 1 else np.zeros(1)
    max_jump = float(jumps.max()) if jumps.size else 0.0
    if max_jump > max_jump_cells * grid.h[0]:
        log.warning("translation track jumps by %.3g between snapshots", max_jump)
    return ModulationTrack(times, zs, eps, eps_l2, eps_hs, np.array(ortho), zdot, max_jump)


def track_trajectory(tr: Trajectory, gs: GroundState) -> ModulationTrack:
    return track_modulation(tr.snapshots, tr.snapshot_times, gs)


# -- perturbation equation -----------------------------------------------------

def nonlinear_remainder(gs: GroundState, eps: Field) -> Field:
    """R(eps) = (1/m) d1 sum_{k>=2} C(m, k) Q^(m-k) eps^k, products dealiased."""
    p = gs.params
    grid = gs.grid
    da = dealiaser(grid, p.m)
    qv = da.to_physical(gs.Q.hat)
    ev = da.to_physical(eps.hat)
    acc = np.zeros_like(qv)
    for k in range(2, p.m + 1):
        acc = acc + math.comb(p.m, k) * qv ** (p.m - k) * ev**k
    hat = da.to_spectral(acc)
    return Field.from_hat(grid, 1j * grid.wavenumbers[0] * grid.nyquist_mask * hat / p.m)


@dataclass
class EquationResidual:
    times: np.ndarray
    absolute: np.ndarray
    relative: np.ndarray
    stride_dt: float
    accuracy_flag: bool


def epsilon_equation_residual(track: ModulationTrack, tr: Trajectory, gs: GroundState) -> EquationResidual:
    """Residual of eps_t - d1 L eps - (z1' - c) d1(Q + eps) - sum_j zj' dj(Q + eps) + R(eps).

    Measured in H^-(1+alpha) at interior snapshot times with centred
    differences in time. ``absolute`` is normalised by c ||d1 Q|| in that
    norm, ``relative`` by the sum of the norms of the individual terms.
    """
    if len(track.times) != len(tr.snapshot_times) or not np.allclose(track.times, tr.snapshot_times):
        raise DomainError("track and trajectory are not time-aligned")
    p = gs.params
    grid = gs.grid
    s = -(1.0 + p.alpha) / 2.0
    op = LinearizedOperator(gs)
    ik = [1j * grid.wavenumbers[j] * grid.nyquist_mask for j in range(grid.d)]
    t = track.times
    dts = np.diff(t)
    norm_ref = p.c * negative_sobolev_norm(derivative(gs.Q, 0), s)
    out_t, absr, relr = [], [], []
    for i in range(1, len(t) - 1):
        h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
        e0, e1, e2 = track.eps[i - 1].hat, track.eps[i].hat, track.eps[i + 1].hat
        # three-point derivative on a possibly uneven stencil
        eps_t = (-(h2 / (h1 * (h1 + h2))) * e0 + ((h2 - h1) / (h1 * h2)) * e1 + (h1 / (h2 * (h1 + h2))) * e2)
        eps = track.eps[i]
        lin = ik[0] * op.apply_hat(e1)
        qe = (gs.Q.hat + e1) * grid.nyquist_mask
        zd = track.zdot[i]
        mod = (zd[0] - p.c) * ik[0] * qe
        for j in range(1, grid.d):
            mod = mod + zd[j] * ik[j] * qe
        R = nonlinear_remainder(gs, eps).hat
        terms = [eps_t, lin, mod, R]
        res = eps_t - lin - mod + R
        nres = negative_sobolev_norm(Field.from_hat(grid, res), s)
        scale = sum(negative_sobolev_norm(Field.from_hat(grid, x), s) for x in terms)
        out_t.append(t[i])
        absr.append(nres / norm_ref)
        relr.append(nres / scale if scale > 0 else 0.0)
    stride_dt = float(dts.max()) if dts.size else 0.0
    return EquationResidual(np.array(out_t), np.array(absr), np.array(relr), stride_dt, stride_dt > 0.1)


@dataclass
class RateCheck:
    times: np.ndarray
    numerators: np.ndarray
    ratios: np.ndarray
    constant: float


def modulation_rate_check(track: ModulationTrack, c: float = 1.0, floor: float = 1e-12) -> RateCheck:
    """(|z1' - c| + sum_j |zj'|) / ||eps||_{H^(alpha/2)} along the track."""
    zd = track.zdot
    num = np.abs(zd[:, 0] - c) + np.sum(np.abs(zd[:, 1:]), axis=1)
    keep = track.eps_hs > floor
    ratios = np.where(keep, num / np.where(keep, track.eps_hs, 1.0), np.nan)
    const = float(np.nanmax(ratios)) if np.any(keep) else math.nan
    return RateCheck(track.times, num, ratios, const)


# -- virial functional ---------------------------------------------------------

def cutoff(s: np.ndarray) -> np.ndarray:
    """Plateau bump: 1 on |s| <= 1, exp(1 - 1/(1 - (|s|-1)^2)) on 1 < |s| < 2, 0 beyond."""
    t = np.abs(np.asarray(s, dtype=float)) - 1.0
    out = np.where(t <= 0, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - tm**2))
    return out


def cutoff_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    t = np.abs(s) - 1.0
    out = np.zeros_like(s)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    out[mid] = np.sign(s[mid]) * np.exp(1.0 - 1.0 / (1.0 - tm**2)) * (-2.0 * tm / (1.0 - tm**2) ** 2)
    return out


@dataclass
class VirialInputs:
    A: float
    beta: float
    lambda0: float
    F: Field
    F_A: Field
    sigma: Field
    sigma_prime: Field
    integrand: Field
    chi0: Field
    lam_q: Field
    tail: float


def antiderivative_x1(g: Field) -> Field:
    """x1-primitive of g vanishing at the left box edge.

    The mean over x1 of each line contributes a linear ramp, so the result is
    not periodic in x1.
    """
    grid = g.grid
    k1 = grid.wavenumbers[0]
    mean = np.mean(g.values, axis=0, keepdims=True)
    fluct = g.values - mean
    fh = grid.fft(fluct)
    with np.errstate(divide="ignore", invalid="ignore"):
        ph = np.where(k1 != 0, fh / (1j * k1), 0.0) * grid.nyquist_mask
    prim = grid.ifft(ph)
    x1 = grid.coords[0] + 0.5 * grid.L[0]
    vals = prim + mean * x1
    vals = vals - vals[0:1]
    return Field(grid, vals)


def build_virial(gs: GroundState, sr: SpectralReport, A: float) -> VirialInputs:
    """F = x1-primitive of Lambda Q + beta chi0 and F_A = F sigma(x1/A)."""
    p = gs.params
    if not p.criticality.supercritical:
        raise CriticalityClassError("the virial functional is built for the supercritical class")
    grid = gs.grid
    if A < 1:
        raise DomainError("cutoff scale must be at least 1")
    if 2 * A > 0.5 * grid.L[0] + 1e-12:
        raise CutoffLeakError(f"2A = {2 * A} exceeds the half box {0.5 * grid.L[0]}")
    Q = gs.Q
    chi = sr.chi0 * (1.0 / l2_norm(sr.chi0))
    lam_q = scaling_generator(Q, p)
    q_lq = float(np.sum(Q.values * lam_q.values) * grid.cell)
    q_chi = float(np.sum(Q.values * chi.values) * grid.cell)
    beta = -q_lq / q_chi
    g = lam_q + beta * chi
    F = antiderivative_x1(g)
    x1 = np.broadcast_to(grid.coords[0], grid.shape)
    sig = Field(grid, cutoff(x1 / A))
    sigp = Field(grid, cutoff_derivative(x1 / A))
    # integrable tail beyond the left edge, |g| ~ |x|^-(1+alpha) along x1
    tail = float(np.max(np.abs(g.values[0:1]))) * 0.5 * grid.L[0] / p.alpha
    return VirialInputs(A, beta, sr.lambda0, F, F * sig, sig, sigp, g, chi, lam_q, tail)


@dataclass
class VirialSeries:
    A: float
    beta: float
    lambda0: float
    times: np.ndarray
    J: np.ndarray
    dJ_fd: np.ndarray
    dJ_analytic: np.ndarray
    theta: np.ndarray
    bound_M0: float
    terms: dict = field(default_factory=dict)

    def agreement(self, floor: float = 1e-6) -> np.ndarray:
        scale = np.maximum(np.abs(self.dJ_fd), floor)
        return np.abs(self.dJ_fd - self.dJ_analytic) / scale

    @property
    def theta_sign_constant(self) -> bool:
        th = self.theta[np.abs(self.theta) > 0]
        return bool(th.size == 0 or np.all(th > 0) or np.all(th < 0))


def _integral(a: Field, b: Field) -> float:
    return float(np.sum(a.values * b.values) * a.grid.cell)


def virial_terms(gs: GroundState, vi: VirialInputs, eps: Field, zdot: np.ndarray) -> dict:
    """Every term of the analytic derivative of J_A at one time (speed-c form)."""
    p = gs.params
    c = p.c
    grid = gs.grid
    Q = gs.Q
    op = LinearizedOperator(gs)
    A = vi.A
    sig, sigp, g, F = vi.sigma, vi.sigma_prime, vi.integrand, vi.F
    Dsym = riesz_symbol(grid, p.alpha)
    dz1 = zdot[0] - c
    sg = g * sig
    comm = Field.from_hat(grid, Dsym * sg.hat) - sig * Field.from_hat(grid, Dsym * g.hat)
    t = {}
    t["main"] = vi.beta * vi.lambda0 * _integral(eps, vi.chi0 * sig)
    t["eps_Q"] = c * _integral(eps, Q * sig)
    t["mod_eps"] = -dz1 * _integral(eps, sg)
    t["mod_Q"] = -dz1 * _integral(Q, g * (sig - 1.0))
    t["commutator"] = -_integral(eps, comm)
    t["cutoff_L"] = -_integral(eps, op(F * sigp)) / A
    t["mod_cutoff"] = -dz1 * _integral(Q + eps, F * sigp) / A
    trans = 0.0
    for j in range(1, grid.d):
        trans -= zdot[j] * _integral(Q + eps, derivative(F, j) * sig)
    t["transverse"] = trans
    t["remainder"] = -_integral(nonlinear_remainder(gs, eps), vi.F_A)
    return t


def virial_series(track: ModulationTrack, tr: Trajectory | None, gs: GroundState, vi: VirialInputs) -> VirialSeries:
    """J_A(t) = int eps F_A, theta(t) = int eps chi0, and dJ/dt two ways."""
    if tr is not None and len(track.times) != len(tr.snapshot_times):
        raise DomainError("track and trajectory are not time-aligned")
    J = np.array([_integral(e, vi.F_A) for e in track.eps])
    theta = np.array([_integral(e, vi.chi0) for e in track.eps])
    dJ_fd = centered_derivative(track.times, J) if len(J) > 2 else np.full_like(J, np.nan)
    per_time = [virial_terms(gs, vi, e, zd) for e, zd in zip(track.eps, track.zdot)]
    names = list(per_time[0].keys()) if per_time else []
    terms = {k: np.array([pt[k] for pt in per_time]) for k in names}
    dJ_an = np.sum([terms[k] for k in names], axis=0) if names else np.zeros_like(J)
    M0 = float(np.max(np.abs(J)) / math.sqrt(vi.A)) if J.size else math.nan
    return VirialSeries(vi.A, vi.beta, vi.lambda0, track.times, J, dJ_fd, dJ_an, theta, M0, terms)


# -- initial data and experiments ----------------------------------------------

def instability_sequence(n: int, gs: GroundState) -> Field:
    """lam Q_c(lam^(2/d) x) with lam = 1 + 1/n, spectrally resampled."""
    if n < 1:
        raise DomainError("n must be a positive integer")
    lam = 1.0 + 1.0 / n
    p = gs.params
    return resample_scaled(gs.Q, p, lam, lam ** (2.0 / p.d))


@dataclass
class SequenceBudget:
    """Mass and energy of u_{0,n} against Q.

    On the box the rescaled datum carries continuation tail mass that the box
    misses for Q; ``tail_band`` is that mass minus the outermost cell of Q,
    so ``mass_gap - tail_band`` is the identity defect (d = 1 only).
    """

    n: int
    lam: float
    mass_gap: float
    tail_band: float
    mass_defect: float
    energy_gap: float
    energy_formula: float


def _continuation_band(gs: GroundState, lam: float) -> float:
    grid = gs.grid
    p = gs.params
    if grid.d != 1:
        return math.nan
    rb, qb = tail_anchor(gs.Q)
    R = lam ** (2.0 / p.d) * 0.5 * grid.L[0]
    if p.alpha >= 2:
        k = 2.0 * math.sqrt(p.c)
        band = qb**2 * (1.0 - math.exp(-k * (R - rb))) / k
    else:
        e = 2.0 * (1.0 + p.alpha)
        band = qb**2 * rb**e * (rb ** (1 - e) - R ** (1 - e)) / (e - 1)
    return band - grid.h[0] * qb**2


def sequence_budget(n: int, gs: GroundState, u0: Field | None = None) -> SequenceBudget:
    p = gs.params
    lam = 1.0 + 1.0 / n
    u0 = instability_sequence(n, gs) if u0 is None else u0
    mq = fn.mass(gs.Q)
    gap = fn.mass(u0) - mq
    band = _continuation_band(gs, lam)
    formula = fn.energy_gap_factor(lam, p) * fn.potential_integral(gs.Q, p.m) / (p.m * (p.m + 1))
    return SequenceBudget(
        n, lam, gap, band, (gap - band) / mq,
        fn.energy(u0, p) - fn.energy(gs.Q, p), formula,
    )


@dataclass
class ExperimentReport:
    scenario: str
    times: np.ndarray
    distances: np.ndarray
    omega: float
    exit_time: float | None
    verdict: str
    n: int | None = None
    initial_distance: float = math.nan
    sup_distance: float = math.nan
    trajectory: Trajectory | None = None
    virial: VirialSeries | None = None
    track: ModulationTrack | None = None
    extras: dict = field(default_factory=dict)


def _distance_monitor(gs: GroundState, omega: float | None, store: list):
    def cb(t, u):
        d = tube_distance(u, gs)
        store.append((t, d))
        return omega is not None and d >= omega

    return cb


def localized_noise(grid: Grid, rng: np.random.Generator, width: float = 4.0, smooth: float = 1.0) -> Field:
    """Smooth random field under a Gaussian envelope centred at the origin."""
    shape = grid.spec_shape
    hat = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    hat = hat * np.exp(-(grid.xi_abs * smooth) ** 2 / 2.0) * grid.nyquist_mask
    raw = Field.from_hat(grid, hat)
    env = np.exp(-(grid.radius**2) / (2 * width**2))
    out = Field(grid, raw.values * env)
    return Field.from_hat(grid, out.hat * grid.nyquist_mask)


def perturb_to_distance(gs: GroundState, eta: Field, delta: float) -> Field:
    """Q + t eta with t tuned so the initial tube distance equals delta."""
    t = delta / max(tube_distance(gs.Q + eta, gs), 1e-300)
    for _ in range(3):
        d = tube_distance(gs.Q + t * eta, gs)
        if d == 0:
            break
        t *= delta / d
    return gs.Q + t * eta


@dataclass
class StabilityConfig:
    delta: float = 1e-2
    T: float = 50.0
    dt: float | None = None
    stride: int = 50
    seed: int = 0
    kind: str = "noise"  # noise, amplitude or sequence
    n: int = 5
    omega: float | None = None
    snapshot_dt: float | None = None


def _stride(cfg, dt: float) -> int:
    if cfg.snapshot_dt is None:
        return cfg.stride
    return max(1, int(round(cfg.snapshot_dt / dt)))


def run_stability_experiment(gs: GroundState, cfg: StabilityConfig) -> ExperimentReport:
    """Evolve perturbed subcritical data and record the tube distance."""
    p = gs.params
    if not p.criticality.subcritical:
        raise CriticalityClassError("stability runs need the subcritical class")
    grid = gs.grid
    if cfg.kind == "noise":
        rng = np.random.default_rng(cfg.seed)
        if cfg.delta == 0:
            u0 = gs.Q
        else:
            u0 = perturb_to_distance(gs, localized_noise(grid, rng), cfg.delta)
    elif cfg.kind == "amplitude":
        u0 = perturb_to_distance(gs, gs.Q, cfg.delta) if cfg.delta else gs.Q
    elif cfg.kind == "sequence":
        u0 = instability_sequence(cfg.n, gs)
    else:
        raise DomainError(f"unknown perturbation kind {cfg.kind!r}")
    store: list = []
    dt = cfg.dt or default_dt(u0, p)
    tr = evolve(u0, p, cfg.T, dt, _stride(cfg, dt), callback=_distance_monitor(gs, cfg.omega, store))
    times = np.array([t for t, _ in store])
    dist = np.array([d for _, d in store])
    exit_time = None
    verdict = "stayed"
    if cfg.omega is not None and np.any(dist >= cfg.omega):
        exit_time = float(times[np.argmax(dist >= cfg.omega)])
        verdict = "exited"
    if tr.blew_up:
        verdict = "blew_up"
        exit_time = tr.blowup_time if exit_time is None else exit_time
    return ExperimentReport(
        scenario=f"stability:{cfg.kind}",
        times=times,
        distances=dist,
        omega=cfg.omega if cfg.omega is not None else math.nan,
        exit_time=exit_time,
        verdict=verdict,
        n=cfg.n if cfg.kind == "sequence" else None,
        initial_distance=float(dist[0]),
        sup_distance=float(dist.max()),
        trajectory=tr,
    )


def default_omega(gs: GroundState) -> float:
    """Half the H^(alpha/2) distance between Q and the n = 1 datum."""
    return 0.5 * tube_distance(instability_sequence(1, gs), gs)


@dataclass
class InstabilityConfig:
    n_values: tuple = tuple(range(1, 9))
    T: float = 40.0
    dt: float | None = None
    stride: int = 20
    omega: float | None = None
    virial_n: int | None = -1  # -1 picks the largest n, None disables
    A_values: tuple = ()
    keep_trajectories: bool = False
    snapshot_dt: float | None = None


def run_instability_experiment(gs: GroundState, sr: SpectralReport | None, cfg: InstabilityConfig) -> list[ExperimentReport]:
    """Evolve lam_n Q(lam_n^(2/d) x) for each n until the tube of radius omega is left."""
    p = gs.params
    if not p.criticality.supercritical:
        raise CriticalityClassError("instability runs need the supercritical class")
    if not p.alpha > max(1.0 - p.d / 2.0, 0.0):
        raise CriticalityClassError("instability runs need alpha > max(1 - d/2, 0)")
    omega = cfg.omega if cfg.omega is not None else default_omega(gs)
    virial_n = max(cfg.n_values) if cfg.virial_n == -1 else cfg.virial_n
    reports = []
    for n in cfg.n_values:
        u0 = instability_sequence(n, gs)
        store: list = []
        keep = cfg.keep_trajectories or n == virial_n
        dt = cfg.dt or default_dt(u0, p)
        tr = evolve(u0, p, cfg.T, dt, _stride(cfg, dt), callback=_distance_monitor(gs, omega, store))
        times = np.array([t for t, _ in store])
        dist = np.array([d for _, d in store])
        exit_time = None
        verdict = "stayed"
        if np.any(dist >= omega):
            exit_time = float(times[np.argmax(dist >= omega)])
            verdict = "exited"
        if tr.blew_up:
            verdict = "blew_up"
            exit_time = tr.blowup_time if exit_time is None else exit_time
        rep = ExperimentReport(
            scenario="instability",
            times=times,
            distances=dist,
            omega=omega,
            exit_time=exit_time,
            verdict=verdict,
            n=n,
            initial_distance=float(dist[0]),
            sup_distance=float(dist.max()),
            trajectory=tr if keep else None,
        )
        rep.extras["budget"] = sequence_budget(n, gs, u0)
        rep.extras["under_resolved_time"] = tr.under_resolved_time
        if n == virial_n and sr is not None and len(tr.snapshot_times) > 2:
            pre = [i for i, t in enumerate(tr.snapshot_times) if exit_time is None or t < exit_time]
            snaps = [tr.snapshots[i] for i in pre]
            ts = [tr.snapshot_times[i] for i in pre]
            track = track_modulation(snaps, ts, gs)
            rep.track = track
            series = {}
            for A in cfg.A_values or (gs.grid.L[0] / 8,):
                series[A] = virial_series(track, None, gs, build_virial(gs, sr, A))
            rep.virial = series[next(iter(series))]
            rep.extras["virial_by_A"] = series
        reports.append(rep)
    return reports
