"""Acceptance suite: twelve numbered criteria at desk scale.

Run under pytest (one test per criterion, PASS/FAIL lines in the terminal
summary) or directly as a script:

    python tests/test_acceptance.py            # all criteria
    python tests/test_acceptance.py 1 5 8      # a subset

The parameter sweep shared by criteria 2, 3, 5 and 6 is solved once and cached
for the session. The full suite takes roughly twenty minutes on one core; the
alpha = 0.7, m = 4 point needs a 2^20 grid and dominates the spectrum cost.
"""

from __future__ import annotations

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from fkdvlab import functionals as fn
from fkdvlab.evolution import conservation_report, evolve
from fkdvlab.ground_state import (
    bessel_kernel_profile,
    constrained_minimize,
    decay_fit,
    petviashvili_solve,
    rescale,
    speed_for_mass,
)
from fkdvlab.linearized import (
    chi_decay_fit,
    expansion_remainder,
    lambda_identity_residual,
    q_lambda_q,
    spectrum,
)
from fkdvlab.params import ModelParams
from fkdvlab.spectral import Field, commutator_check, make_grid, moment_test_field
from fkdvlab.stability import (
    InstabilityConfig,
    StabilityConfig,
    run_instability_experiment,
    run_stability_experiment,
    tube_distance,
)

# (d, alpha, m, L, N): small alpha needs wide boxes for the algebraic tail and
# fine grids for the sharp core, more so as m grows
SWEEP = [
    (1, 0.7, 2, 2400.0, 2**16),
    (1, 0.7, 3, 1600.0, 2**18),
    (1, 0.7, 4, 800.0, 2**20),
    (1, 1.0, 2, 800.0, 2**14),
    (1, 1.0, 3, 800.0, 2**14),
    (1, 1.0, 4, 800.0, 2**16),
    (1, 1.5, 2, 800.0, 2**14),
    (1, 1.5, 3, 800.0, 2**14),
    (1, 1.5, 4, 800.0, 2**14),
    (1, 1.9, 2, 800.0, 2**14),
    (1, 1.9, 3, 800.0, 2**14),
    (1, 1.9, 4, 800.0, 2**14),
    (2, 1.5, 2, 100.0, 512),
    (2, 1.9, 2, 100.0, 512),
]

# The scaling identity reaches into the far tail through x . grad Q, which the
# periodic box cuts off at L/2; at alpha = 0.7, m = 4 the 2^20 sweep box leaves a
# 1.6e-3 floor, so the identity checks there run on a wider box (Q only, no spectrum)
IDENTITY_GRIDS = {(1, 0.7, 4): (1600.0, 2**22)}

RESULTS: dict[int, tuple[bool, str]] = {}


def _label(point) -> str:
    d, a, m = point[:3]
    return f"(d={d}, a={a:g}, m={m})"


@lru_cache(maxsize=None)
def sweep_ground_state(i: int):
    d, a, m, L, N = SWEEP[i]
    return petviashvili_solve(ModelParams(d, a, m), make_grid(d, L, N))


@lru_cache(maxsize=None)
def identity_ground_state(i: int):
    d, a, m, L, N = SWEEP[i]
    if (d, a, m) not in IDENTITY_GRIDS:
        return sweep_ground_state(i)
    L, N = IDENTITY_GRIDS[(d, a, m)]
    return petviashvili_solve(ModelParams(d, a, m), make_grid(d, L, N))


@lru_cache(maxsize=None)
def sweep_spectrum(i: int):
    return spectrum(sweep_ground_state(i))


def _worst(rows):
    """rows of (label, value, ok); a compact summary naming the worst point."""
    bad = [r for r in rows if not r[2]]
    label, value, _ = max(rows, key=lambda r: r[1])
    msg = f"worst {value:.2e} at {label}"
    if bad:
        msg += "; failing: " + ", ".join(f"{b[0]}={b[1]:.2e}" for b in bad)
    return not bad, msg


# -- criteria ------------------------------------------------------------------

def criterion_1():
    out = []
    ok = True
    for (a, L, N, exact, tol, budget) in [
        (2.0, 80.0, 2048, lambda x: 3.0 / np.cosh(x / 2) ** 2, 1e-6, 5.0),
        (1.0, 800.0, 16384, lambda x: 4.0 / (1.0 + x**2), 1e-3, 30.0),
    ]:
        g = make_grid(1, L, N)
        t0 = time.perf_counter()
        gs = petviashvili_solve(ModelParams(1, a, 2, 1.0), g)
        elapsed = time.perf_counter() - t0
        err = float(np.max(np.abs(gs.Q.values - exact(g.coords[0]))))
        ok &= err < tol and elapsed < budget
        out.append(f"a={a:g}: sup err {err:.2e} (<{tol:g}) in {elapsed:.1f}s (<{budget:g}s)")
    return ok, "; ".join(out)


def criterion_2():
    rows = []
    for i, pt in enumerate(SWEEP):
        r = fn.pohozaev_residuals(sweep_ground_state(i)).max()
        rows.append((_label(pt), r, r < 1e-4))
    return _worst(rows)


def criterion_3():
    rows = []
    for i, pt in enumerate(SWEEP):
        d, a = pt[0], pt[1]
        if a >= 2:
            continue
        gs = sweep_ground_state(i)
        for name, fit in (
            ("Q", decay_fit(gs.Q, 0, a)),
            ("dQ", decay_fit(gs.Q, 1, a)),
            ("chi0", chi_decay_fit(sweep_spectrum(i))),
        ):
            rows.append((f"{_label(pt)} {name}", fit.relative_error, fit.relative_error < 0.05))
    return _worst(rows)


def criterion_4():
    g = make_grid(1, 20000.0, 2**18)
    rows = []
    for a in (0.8, 1.0, 1.5):
        slope = abs(bessel_kernel_profile(a, 1.0, g).plateau_slope)
        rows.append((f"a={a:g}", slope, slope < 0.1))
    return _worst(rows)


def criterion_5():
    ok = True
    notes = []
    worst_res = 0.0
    for i, pt in enumerate(SWEEP):
        sr = sweep_spectrum(i)
        res = max(sr.kernel_residuals)
        worst_res = max(worst_res, res)
        good = sr.n_negative == 1 and sr.n_kernel == pt[0] and res < 1e-6
        if not good:
            notes.append(f"{_label(pt)}: neg {sr.n_negative}, kernel {sr.n_kernel}, res {res:.1e}")
        ok &= good
    kdv = spectrum(petviashvili_solve(ModelParams(1, 2.0, 2, 1.0), make_grid(1, 80.0, 2048)))
    lam_err = abs(kdv.lambda0 - 1.25)
    ok &= lam_err < 1e-4
    msg = f"sweep counts {'ok' if not notes else 'bad'}; kernel residual max {worst_res:.1e}; KdV lambda0 err {lam_err:.1e}"
    if notes:
        msg += "; " + "; ".join(notes)
    return ok, msg


def criterion_6():
    lam_rows, qlq_rows, comm_rows = [], [], []
    signs = set()
    sign_ok = True
    for i, pt in enumerate(SWEEP):
        d, a, m = pt[:3]
        gs = identity_ground_state(i)
        lam = lambda_identity_residual(gs)
        lam_rows.append((_label(pt), lam, lam < 1e-3))
        q = q_lambda_q(gs)
        qlq_rows.append((_label(pt), q.residual, q.residual < 1e-3))
        # <Q, Lambda Q> changes sign at the L^2-critical power m = 2 alpha/d + 1
        gap = 2 * a - d * (m - 1)
        expected = 0 if abs(gap) < 1e-12 else int(np.sign(gap))
        sign_ok &= q.sign == expected
        signs.add(q.sign)
        g = gs.grid
        comm = commutator_check(moment_test_field(g, max(1.0, 4.0 * max(g.h))), a).residual
        comm_rows.append((_label(pt), comm, comm < 1e-8))
    crossing = {1, -1} <= signs
    ok1, m1 = _worst(lam_rows)
    ok2, m2 = _worst(qlq_rows)
    ok3, m3 = _worst(comm_rows)
    ok = ok1 and ok2 and ok3 and sign_ok and crossing
    return ok, f"L(LQ)+Q {m1} | <Q,LQ> {m2}, signs ok {sign_ok}, both signs seen {crossing} | commutator {m3}"


def criterion_7():
    gs = petviashvili_solve(ModelParams(1, 1.0, 2), make_grid(1, 400.0, 4096))
    rng = np.random.default_rng(7)
    g = gs.grid
    hat = (rng.standard_normal(g.spec_shape) + 1j * rng.standard_normal(g.spec_shape)) * np.exp(-(g.xi_abs**2))
    raw = Field.from_hat(g, hat * g.nyquist_mask)
    shape = Field(g, raw.values * np.exp(-(g.coords[0] ** 2) / 50.0))
    shape = Field.from_hat(g, shape.hat * g.nyquist_mask)
    shape = shape * (1.0 / math.sqrt(fn.mass(shape) * 2.0))
    amps = (0.05, 0.1, 0.5)
    exps = [expansion_remainder(gs, a * shape) for a in amps]
    agree = max(e.agreement for e in exps)
    slope = math.log(abs(exps[-1].direct) / abs(exps[0].direct)) / math.log(amps[-1] / amps[0])
    ok = agree < 1e-8 and abs(slope - 3.0) < 0.15
    return ok, f"direct vs binomial {agree:.1e} (<1e-8); log-log slope over a decade {slope:.4f} (3 within 5%)"


def criterion_8():
    p = ModelParams(1, 2.0, 2, 1.0)
    gs = petviashvili_solve(p, make_grid(1, 80.0, 512))
    drifts = {}
    for dt in (0.01, 0.005):
        drifts[dt] = conservation_report(evolve(gs.Q, p, 20.0, dt, stride=10**9))
    fine = drifts[0.005]
    ratio = drifts[0.01].energy / fine.energy
    ok_drift = fine.mass < 1e-9 and fine.energy < 1e-7 and fine.l1 < 1e-9
    ok_ratio = abs(ratio - 16.0) <= 3.0
    msg = (
        f"dt=0.005 drifts mass {fine.mass:.1e} energy {fine.energy:.1e} L1 {fine.l1:.1e}; "
        f"energy drift ratio dt 0.01/0.005 = {ratio:.1f} (target 16+-3)"
    )
    return ok_drift and ok_ratio, msg


def criterion_9():
    ok = True
    parts = []
    for a in (1.0, 1.5):
        gs = petviashvili_solve(ModelParams(1, a, 2), make_grid(1, 400.0, 4096))
        for delta in (1e-3, 1e-2):
            K = {}
            for dd in (delta, delta / 2):
                rep = run_stability_experiment(gs, StabilityConfig(delta=dd, T=50.0, dt=0.01, snapshot_dt=0.5))
                K[dd] = rep.sup_distance / dd
            k_full, k_half = K[delta], K[delta / 2]
            stable = 0.5 <= k_half / k_full <= 2.0
            ok &= k_full <= 10 and k_half <= 10 and stable
            parts.append(f"a={a:g} d={delta:g}: K={k_full:.2f}, halved {k_half:.2f}")
    return ok, "; ".join(parts)


@lru_cache(maxsize=None)
def instability_runs():
    L = 100.0
    gs = petviashvili_solve(ModelParams(1, 1.0, 4), make_grid(1, L, 16384))
    sr = spectrum(gs)
    cfg = InstabilityConfig(n_values=tuple(range(1, 9)), T=2.0, snapshot_dt=0.002, A_values=(L / 16, L / 8, L / 4))
    return run_instability_experiment(gs, sr, cfg)


def criterion_10():
    ok = True
    parts = []
    for rep in instability_runs():
        b = rep.extras["budget"]
        good = rep.verdict in ("exited", "blew_up") and abs(b.mass_defect) < 1e-8 and b.energy_gap < 0
        ok &= good
        t_exit = "none" if rep.exit_time is None else f"{rep.exit_time:.3g}"
        parts.append(f"n={rep.n} {rep.verdict} T={t_exit}")
    worst_mass = max(abs(r.extras["budget"].mass_defect) for r in instability_runs())
    worst_gap = max(r.extras["budget"].energy_gap for r in instability_runs())
    return ok, ", ".join(parts) + f"; mass defect max {worst_mass:.1e}, energy gap max {worst_gap:.3g}"


def criterion_11():
    rep = instability_runs()[-1]
    by_A = rep.extras["virial_by_A"]
    mismatch = max(float(np.max(v.agreement()[1:-1])) for v in by_A.values())
    theta_ok = all(v.theta_sign_constant for v in by_A.values())
    inf_dJ = min(float(np.min(np.abs(v.dJ_fd))) for v in by_A.values())
    M0 = [v.bound_M0 for v in by_A.values()]
    spread = max(M0) / min(M0)
    ok = mismatch < 1e-2 and theta_ok and inf_dJ > 0 and spread < 2.0
    return ok, (
        f"n={rep.n}: analytic vs FD {mismatch:.1e} (<1e-2); theta one sign {theta_ok}; "
        f"inf|dJ| {inf_dJ:.3g}; sup|J|/sqrt(A) spread {spread:.2f}x (<2)"
    )


def criterion_12():
    ok = True
    parts = []
    for (a, L, N, q) in [(2.0, 80.0, 1024, 12.0), (1.5, 400.0, 4096, 3.0)]:
        p = ModelParams(1, a, 2)
        g = make_grid(1, L, N)
        gs = petviashvili_solve(p, g)
        res = constrained_minimize(q, p, g)
        ref = rescale(gs, speed_for_mass(q, gs))
        dist = tube_distance(res.v, ref)
        ok &= dist < 1e-3
        parts.append(f"a={a:g} q={q:g}: distance {dist:.1e}")
    return ok, "; ".join(parts)


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 13)}


def evaluate(n: int) -> tuple[bool, str]:
    t0 = time.perf_counter()
    ok, detail = CRITERIA[n]()
    detail = f"{detail} [{time.perf_counter() - t0:.0f}s]"
    RESULTS[n] = (bool(ok), detail)
    return RESULTS[n]


def format_line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.acceptance
@pytest.mark.parametrize("n", list(CRITERIA))
def test_criterion(n):
    ok, detail = evaluate(n)
    print(format_line(n))
    assert ok, detail


def main(argv) -> int:
    chosen = [int(a) for a in argv] or list(CRITERIA)
    for n in chosen:
        evaluate(n)
        print(format_line(n), flush=True)
    return 0 if all(RESULTS[n][0] for n in chosen) else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
