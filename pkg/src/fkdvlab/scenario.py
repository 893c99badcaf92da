"""Scenario files: flat ``key = value`` configs, validation and execution.

A scenario names one kind of job (groundstate, spectrum, evolve, stability,
instability, kernel, identities), the model parameters, the grid and the
knobs of that job. Every run writes into its own fresh directory together
with a manifest of checksums and the fully resolved configuration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import functionals as fn
from . import io
from .errors import ConfigurationError, FKdVError
from .params import ModelParams, validate_params
from .spectral import Grid, make_grid

log = logging.getLogger(__name__)

KINDS = ("groundstate", "spectrum", "evolve", "stability", "instability", "kernel", "identities")
REQUIRED = object()


class ScenarioError(ConfigurationError):
    """Scenario validation failure carrying every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def parse_range(text: str) -> tuple:
    """'1..8' (inclusive) or '1,2,5' to a tuple of ints."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


COMMON = {
    "kind": (str, REQUIRED),
    "d": (int, 1),
    "alpha": (float, REQUIRED),
    "m": (int, REQUIRED),
    "c": (float, 1.0),
    "L": (_opt_float, None),
    "N": (int, None),
    "seed": (int, 0),
    "out": (str, None),
    "tol": (float, 1e-10),
}

KIND_KEYS = {
    "groundstate": {"max_iter": (int, 2000)},
    "spectrum": {"method": (str, "auto")},
    "identities": {},
    "kernel": {"lam": (float, 1.0), "composite": (_bool, False)},
    "evolve": {
        "T": (float, 20.0),
        "dt": (_opt_float, None),
        "stride": (int, 100),
        "init": (str, "soliton"),
        "delta": (float, 0.0),
    },
    "stability": {
        "T": (float, 50.0),
        "dt": (_opt_float, None),
        "delta": (float, 1e-2),
        "perturbation": (str, "noise"),
        "n": (int, 5),
        "snapshot_dt": (float, 0.5),
        "omega": (_opt_float, None),
    },
    "instability": {
        "T": (float, 2.0),
        "dt": (_opt_float, None),
        "omega": (_opt_float, None),
        "n_range": (parse_range, (1, 2, 3, 4, 5, 6, 7, 8)),
        "A": (_float_list, ()),
        "snapshot_dt": (float, 0.002),
    },
}

CHOICES = {
    "method": ("auto", "dense", "krylov"),
    "init": ("soliton", "noise"),
    "perturbation": ("noise", "amplitude", "sequence"),
}


def default_grid(d: int, alpha: float, kind: str = "groundstate") -> tuple[float, int]:
    """Box length and points per axis used when the config leaves them out."""
    if kind == "kernel":
        return 20000.0, 2**18
    if d == 2:
        return 100.0, 512
    if alpha >= 2:
        return 80.0, 2048
    if alpha > 1:
        return 400.0, 4096
    return 800.0, 16384


@dataclass
class Scenario:
    kind: str
    params: ModelParams
    grid: Grid
    knobs: dict
    seed: int = 0
    out: str | None = None
    source: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Every key with its effective value, suitable for a rerun."""
        out = {
            "kind": self.kind,
            "d": self.params.d,
            "alpha": self.params.alpha,
            "m": self.params.m,
            "c": self.params.c,
            "L": self.grid.L[0],
            "N": self.grid.N[0],
            "seed": self.seed,
        }
        out.update(self.knobs)
        return out


def read_config(path) -> dict:
    """Raw key/value strings from a config file; ``#`` starts a comment."""
    raw = {}
    problems = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value, got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    if problems:
        raise ScenarioError(problems)
    return raw


def parse_scenario(source=None, overrides: dict | None = None) -> Scenario:
    """Build a validated Scenario from a config path or mapping plus overrides.

    All violations (unknown keys, bad values, parameter constraints, grid
    constraints) are collected and raised together.
    """
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = {k: str(v) for k, v in source.items()}
    else:
        raw = read_config(source)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = str(v)
    problems = []
    kind = raw.get("kind")
    if kind is None:
        problems.append("missing required key 'kind'")
        raise ScenarioError(problems)
    if kind not in KINDS:
        raise ScenarioError([f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}"])
    schema = dict(COMMON)
    schema.update(KIND_KEYS[kind])
    if kind == "kernel":
        schema["m"] = (int, 2)
    values = {}
    for key in raw:
        if key not in schema:
            problems.append(f"unknown key {key!r} for kind {kind}")
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                problems.append(f"bad value for {key!r}: {raw[key]!r} ({exc})")
        elif default is REQUIRED:
            problems.append(f"missing required key {key!r}")
        else:
            values[key] = default
    for key, allowed in CHOICES.items():
        if key in values and values[key] not in allowed:
            problems.append(f"{key} must be one of {', '.join(allowed)}, got {values[key]!r}")
    for key in ("T", "snapshot_dt", "lam", "stride"):
        if key in values and not values[key] > 0:
            problems.append(f"{key} must be positive, got {values[key]}")
    if {"d", "alpha", "m", "c"} <= values.keys():
        problems.extend(validate_params(values["d"], values["alpha"], values["m"], values["c"]))
    grid = None
    if "d" in values and "alpha" in values and values.get("d") in (1, 2):
        L0, N0 = default_grid(values["d"], values["alpha"], kind)
        L = values["L"] if values.get("L") is not None else L0
        N = values["N"] if values.get("N") is not None else N0
        try:
            grid = make_grid(values["d"], L, N)
        except ConfigurationError as exc:
            problems.append(str(exc))
    if problems:
        raise ScenarioError(problems)
    params = ModelParams(values["d"], values["alpha"], values["m"], values["c"])
    knobs = {k: v for k, v in values.items() if k not in COMMON or k == "tol"}
    return Scenario(kind, params, grid, knobs, values["seed"], values["out"], raw)


# -- execution -----------------------------------------------------------------

def _solve(s: Scenario):
    from .ground_state import petviashvili_solve

    return petviashvili_solve(s.params, s.grid, tol=s.knobs.get("tol", 1e-10), max_iter=s.knobs.get("max_iter", 2000))


def _profile_columns(f, name: str) -> dict:
    g = f.grid
    if g.d == 1:
        return {"x": g.axes[0], name: f.values}
    mid = g.N[1] // 2
    return {"x1": g.axes[0], name: f.values[:, mid]}


def _run_groundstate(s: Scenario, run_dir: Path) -> dict:
    from .ground_state import decay_fit

    gs = _solve(s)
    io.write_field(run_dir / "Q.bin", gs.Q, s.params)
    io.write_csv(run_dir / "profile.csv", _profile_columns(gs.Q, "Q"))
    summary = {
        "residual": gs.residual,
        "iterations": gs.iterations,
        "peak": gs.peak,
        "evenness": gs.evenness,
        "min_value": gs.min_value,
        "mass": fn.mass(gs.Q),
        "energy": fn.energy(gs.Q, s.params),
        "pohozaev": fn.pohozaev_residuals(gs),
        "weinstein": fn.weinstein(gs.Q, s.params),
    }
    if s.params.alpha < 2:
        summary["decay_Q"] = decay_fit(gs.Q, 0, s.params.alpha)
        summary["decay_dQ"] = decay_fit(gs.Q, 1, s.params.alpha)
    io.write_json(run_dir / "groundstate.json", summary)
    return summary


def _run_spectrum(s: Scenario, run_dir: Path) -> dict:
    from .linearized import chi_decay_fit, spectrum

    gs = _solve(s)
    sr = spectrum(gs, method=s.knobs["method"])
    io.write_field(run_dir / "chi0.bin", sr.chi0, s.params)
    summary = {
        "lambda0": sr.lambda0,
        "eigenvalues": sr.eigenvalues,
        "n_negative": sr.n_negative,
        "n_kernel": sr.n_kernel,
        "kernel_residuals": sr.kernel_residuals,
        "kernel_angle": sr.kernel_angle,
        "gap": sr.gap,
        "chi_residual": sr.chi_residual,
        "method": sr.method,
    }
    if s.params.alpha < 2:
        summary["decay_chi0"] = chi_decay_fit(sr)
    io.write_json(run_dir / "spectrum.json", summary)
    return summary


def _run_identities(s: Scenario, run_dir: Path) -> dict:
    from .linearized import lambda_identity_residual, q_lambda_q
    from .spectral import commutator_check, moment_test_field

    gs = _solve(s)
    p = s.params
    poh = fn.pohozaev_residuals(gs)
    qlq = q_lambda_q(gs)
    g = gs.grid
    comm = commutator_check(moment_test_field(g, max(1.0, 4.0 * max(g.h))), p.alpha)
    w = fn.weinstein(gs.Q, p)
    sharp = fn.sharp_gn_constant(gs)
    rows = {
        "pohozaev_dispersive": poh.r1,
        "pohozaev_potential": poh.r2,
        "pohozaev_energy": poh.r3,
        "lambda_identity": lambda_identity_residual(gs),
        "q_lambda_q": qlq.residual,
        "commutator": comm.residual,
        "sharp_constant": abs(w * sharp - 1.0),
    }
    io.write_csv(run_dir / "identities.csv", {"name": list(rows), "residual": list(rows.values())})
    summary = dict(rows)
    summary["q_lambda_q_sign"] = qlq.sign
    summary["commutator_edge_warning"] = comm.edge_warning
    io.write_json(run_dir / "identities.json", summary)
    return summary


def _run_kernel(s: Scenario, run_dir: Path) -> dict:
    from .ground_state import bessel_kernel_profile, kernel_tail_constant

    fit = bessel_kernel_profile(s.params.alpha, s.knobs["lam"], s.grid, composite=s.knobs["composite"])
    summary = {"fit": fit}
    if not s.knobs["composite"]:
        summary["tail_constant"] = kernel_tail_constant(s.params.alpha, s.knobs["lam"], s.params.d)
    io.write_json(run_dir / "kernel.json", summary)
    return summary


def _run_evolve(s: Scenario, run_dir: Path) -> dict:
    from .evolution import conservation_report, evolve
    from .stability import localized_noise, tube_distance

    gs = _solve(s)
    u0 = gs.Q
    if s.knobs["init"] == "noise" and s.knobs["delta"] > 0:
        rng = np.random.default_rng(s.seed)
        u0 = gs.Q + s.knobs["delta"] * localized_noise(s.grid, rng)
    tr = evolve(u0, s.params, s.knobs["T"], s.knobs["dt"], s.knobs["stride"])
    dist = {t: tube_distance(f, gs) for t, f in zip(tr.snapshot_times, tr.snapshots)}
    io.write_csv(
        run_dir / "ledger.csv",
        {
            "t": tr.times,
            "mass": tr.mass,
            "energy": tr.energy,
            "l1": tr.l1,
            "supnorm": tr.sup,
            "tube_distance": [dist.get(t) for t in tr.times],
        },
    )
    for i, (t, f) in enumerate(zip(tr.snapshot_times, tr.snapshots)):
        io.write_field(run_dir / f"snapshot_{i:05d}.bin", f, s.params)
    drift = conservation_report(tr)
    summary = {
        "dt": tr.dt,
        "steps": len(tr.times) - 1,
        "snapshot_times": tr.snapshot_times,
        "drift": drift,
        "blew_up": tr.blew_up,
        "blowup_time": tr.blowup_time,
        "under_resolved_time": tr.under_resolved_time,
        "tainted": tr.tainted,
        "notes": tr.notes,
    }
    io.write_json(run_dir / "trajectory.json", summary)
    return summary


def _report_summary(rep) -> dict:
    return {
        "scenario": rep.scenario,
        "n": rep.n,
        "omega": rep.omega,
        "exit_time": rep.exit_time,
        "verdict": rep.verdict,
        "initial_distance": rep.initial_distance,
        "sup_distance": rep.sup_distance,
    }


def _run_stability(s: Scenario, run_dir: Path) -> dict:
    from .stability import StabilityConfig, run_stability_experiment

    gs = _solve(s)
    k = s.knobs
    cfg = StabilityConfig(
        delta=k["delta"], T=k["T"], dt=k["dt"], seed=s.seed, kind=k["perturbation"],
        n=k["n"], omega=k["omega"], snapshot_dt=k["snapshot_dt"],
    )
    rep = run_stability_experiment(gs, cfg)
    io.write_csv(run_dir / "series.csv", {"t": rep.times, "tube_distance": rep.distances})
    summary = _report_summary(rep)
    summary["K"] = rep.sup_distance / k["delta"] if k["delta"] > 0 else math.nan
    io.write_json(run_dir / "report.json", summary)
    return summary


def _run_instability(s: Scenario, run_dir: Path) -> dict:
    from .linearized import spectrum
    from .stability import InstabilityConfig, run_instability_experiment

    gs = _solve(s)
    sr = spectrum(gs)
    k = s.knobs
    L = s.grid.L[0]
    A_values = k["A"] or (L / 16, L / 8, L / 4)
    cfg = InstabilityConfig(
        n_values=k["n_range"], T=k["T"], dt=k["dt"], omega=k["omega"],
        A_values=A_values, snapshot_dt=k["snapshot_dt"],
    )
    reps = run_instability_experiment(gs, sr, cfg)
    runs = []
    for rep in reps:
        io.write_csv(run_dir / f"series_n{rep.n}.csv", {"t": rep.times, "tube_distance": rep.distances})
        entry = _report_summary(rep)
        entry["budget"] = rep.extras["budget"]
        entry["under_resolved_time"] = rep.extras["under_resolved_time"]
        if rep.track is not None:
            by_A = rep.extras["virial_by_A"]
            entry["virial"] = {}
            for A, v in by_A.items():
                ntimes = len(v.times)
                io.write_csv(
                    run_dir / f"virial_n{rep.n}_A{A:g}.csv",
                    {
                        "t": v.times,
                        "tube_distance": rep.distances[:ntimes],
                        "J": v.J,
                        "dJ_fd": v.dJ_fd,
                        "dJ_analytic": v.dJ_analytic,
                        "theta": v.theta,
                        "z1": rep.track.z[:, 0],
                        "eps_l2": rep.track.eps_l2,
                        "eps_hs": rep.track.eps_hs,
                    },
                )
                entry["virial"][f"{A:g}"] = {
                    "beta": v.beta,
                    "bound_M0": v.bound_M0,
                    "theta_sign_constant": v.theta_sign_constant,
                    "inf_abs_dJ": float(np.min(np.abs(v.dJ_fd))) if v.dJ_fd.size else math.nan,
                    "max_interior_mismatch": float(np.max(v.agreement()[1:-1])) if v.J.size > 2 else math.nan,
                }
        runs.append(entry)
    summary = {"lambda0": sr.lambda0, "omega": reps[0].omega if reps else math.nan, "runs": runs}
    summary["exit_times"] = {str(r.n): r.exit_time for r in reps}
    io.write_json(run_dir / "summary.json", summary)
    return summary


RUNNERS = {
    "groundstate": _run_groundstate,
    "spectrum": _run_spectrum,
    "identities": _run_identities,
    "kernel": _run_kernel,
    "evolve": _run_evolve,
    "stability": _run_stability,
    "instability": _run_instability,
}


@dataclass
class RunResult:
    status: int
    run_dir: Path
    summary: dict
    error: str | None = None


def run_scenario(s: Scenario, root=None) -> RunResult:
    """Execute a scenario in a fresh run directory and write its manifest.

    Package errors are caught and reported with the failing kind; the result
    then carries a nonzero status.
    """
    name = s.out or s.kind
    run_dir = io.new_run_dir(name, root)
    config = s.resolved()
    io.write_json(run_dir / "config.json", config)
    try:
        summary = RUNNERS[s.kind](s, run_dir)
        status, err = 0, None
    except FKdVError as exc:
        log.error("%s failed: %s: %s", s.kind, type(exc).__name__, exc)
        summary, status = {}, 1
        err = f"{s.kind}: {type(exc).__name__}: {exc}"
        io.write_json(run_dir / "error.json", {"error": err, "type": type(exc).__name__, "message": str(exc)})
    io.write_manifest(run_dir, config)
    return RunResult(status, run_dir, summary, err)
