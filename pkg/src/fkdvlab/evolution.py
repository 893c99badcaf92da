"""Time integration of u_t = d1 D^alpha u - d1(u^m)/m on the periodic box.

The dispersive part is diagonal in Fourier space with purely imaginary symbol
i xi_1 |xi|^alpha, so it is integrated exactly by an integrating factor and
the nonlinear flux is advanced with classical fourth-order Runge-Kutta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .errors import DomainError
from .params import ModelParams
from .spectral import Field, Grid, dealiaser, padding_factor, riesz_symbol

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


class Propagator:
    """Integrating-factor RK4 stepper bound to a grid, parameters and dt."""

    def __init__(self, grid: Grid, p: ModelParams, dt: float):
        if dt == 0 or not math.isfinite(dt):
            raise DomainError(f"time step must be finite and nonzero, got {dt}")
        self.grid = grid
        self.p = p
        self.dt = dt
        self.da = dealiaser(grid, p.m)
        mask = grid.nyquist_mask
        self.ik1 = 1j * grid.wavenumbers[0] * mask
        self.linear = self.ik1 * riesz_symbol(grid, p.alpha)
        self.half = np.exp(self.linear * dt / 2)
        self.full = self.half**2

    def flux(self, hat: np.ndarray) -> np.ndarray:
        """-(i xi_1/m) times the projected transform of u^m."""
        v = self.da.to_physical(hat)
        return -self.ik1 * self.da.to_spectral(v**self.p.m) / self.p.m

    def step_hat(self, hat: np.ndarray) -> np.ndarray:
        dt, E, E2 = self.dt, self.half, self.full
        k1 = self.flux(hat)
        k2 = self.flux(E * (hat + 0.5 * dt * k1))
        k3 = self.flux(E * hat + 0.5 * dt * k2)
        k4 = self.flux(E2 * hat + dt * E * k3)
        return E2 * hat + dt / 6.0 * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)


def step(u: Field, p: ModelParams, dt: float) -> Field:
    """One integrating-factor RK4 step; raises FloatingPointError on non-finite output."""
    prop = Propagator(u.grid, p, dt)
    hat = prop.step_hat(u.hat * u.grid.nyquist_mask)
    if not np.all(np.isfinite(hat)):
        raise FloatingPointError("non-finite state after one step")
    return Field.from_hat(u.grid, hat)


def default_dt(u0: Field, p: ModelParams, safety: float = 0.5) -> float:
    """Step bounded by the RK4 stability interval of the transported flux."""
    kmax = u0.grid.max_wavenumber
    amp = max(u0.sup(), 1e-12) ** (p.m - 1)
    return safety * 2.0 / (kmax * max(amp, 1e-3))


@dataclass
class Trajectory:
    params: ModelParams
    grid: Grid
    dt: float
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    l1: np.ndarray
    sup: np.ndarray
    snapshot_times: list
    snapshots: list
    dealias_pad: int
    blew_up: bool = False
    blowup_time: float | None = None
    under_resolved_time: float | None = None
    tainted: bool = False
    notes: list = field(default_factory=list)

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    def conserved(self, i: int) -> fn.ConservedTriple:
        return fn.ConservedTriple(float(self.mass[i]), float(self.energy[i]), float(self.l1[i]))


def spectral_tail(hat: np.ndarray, grid: Grid, fraction: float = 2.0 / 3.0) -> float:
    """Relative spectral energy beyond ``fraction`` of the resolved band."""
    w = grid.half_weights * np.abs(hat) ** 2
    total = np.sum(w)
    if total == 0:
        return 0.0
    outer = grid.xi_abs > fraction * grid.max_wavenumber
    return float(np.sum(w[outer]) / total)


def evolve(
    u0: Field,
    p: ModelParams,
    T: float,
    dt: float | None = None,
    stride: int = 1,
    tail_tol: float = 1e-8,
    callback=None,
) -> Trajectory:
    """Integrate to time T, logging conserved quantities every step.

    Snapshots are kept every ``stride`` steps and at the final time. The run
    stops early, keeping the last finite state, once the sup norm exceeds
    1e6 times its initial value or becomes non-finite. ``callback(t, field)``
    is called on every snapshot and may return True to stop the run.
    """
    if not T > 0:
        raise DomainError("final time must be positive")
    grid = u0.grid
    dt = dt or default_dt(u0, p)
    nsteps = max(1, int(round(T / abs(dt))))
    dt = math.copysign(T / nsteps, dt)
    prop = Propagator(grid, p, dt)
    hat = u0.hat * grid.nyquist_mask
    u = Field.from_hat(grid, hat)
    sup0 = max(u.sup(), 1e-300)

    times, masses, energies, l1s, sups = [], [], [], [], []
    snaps_t, snaps = [], []

    def record(t, f):
        times.append(t)
        masses.append(fn.mass(f))
        energies.append(fn.energy(f, p))
        l1s.append(fn.l1_invariant(f))
        sups.append(f.sup())

    record(0.0, u)
    snaps_t.append(0.0)
    snaps.append(u)
    stop = callback(0.0, u) if callback else False
    blew_up = False
    blow_t = None
    tail_t = None
    for n in range(1, nsteps + 1):
        if stop:
            break
        new = prop.step_hat(hat)
        t = n * abs(dt)
        if not np.all(np.isfinite(new)):
            blew_up, blow_t = True, t
            break
        f = Field.from_hat(grid, new)
        if f.sup() > BLOWUP_FACTOR * sup0:
            blew_up, blow_t = True, t
            break
        hat = new
        record(t, f)
        if tail_t is None and spectral_tail(hat, grid) > tail_tol:
            tail_t = t
        if n % stride == 0 or n == nsteps:
            snaps_t.append(t)
            snaps.append(f)
            if callback and callback(t, f):
                stop = True
    if blew_up and snaps_t[-1] != times[-1]:
        snaps_t.append(times[-1])
        snaps.append(Field.from_hat(grid, hat))
    tr = Trajectory(
        params=p,
        grid=grid,
        dt=dt,
        times=np.array(times),
        mass=np.array(masses),
        energy=np.array(energies),
        l1=np.array(l1s),
        sup=np.array(sups),
        snapshot_times=snaps_t,
        snapshots=snaps,
        dealias_pad=padding_factor(p.m),
        blew_up=blew_up,
        blowup_time=blow_t,
        under_resolved_time=tail_t,
    )
    drift = conservation_report(tr)
    tr.tainted = drift.mass > 1e-8
    if tail_t is not None:
        tr.notes.append(f"spectral tail above {tail_tol:g} from t = {tail_t:.6g}")
    return tr


@dataclass(frozen=True)
class ConservationDrift:
    mass: float
    energy: float
    l1: float


def conservation_report(tr: Trajectory) -> ConservationDrift:
    """Max relative drift of mass and energy and absolute drift of the L^1 integral."""

    def rel(series):
        ref = abs(series[0])
        dev = float(np.max(np.abs(series - series[0])))
        return dev / ref if ref > 0 else dev

    return ConservationDrift(rel(tr.mass), rel(tr.energy), float(np.max(np.abs(tr.l1 - tr.l1[0]))))
