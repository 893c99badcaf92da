import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkdvlab import functionals as fn
from fkdvlab.errors import CriticalityClassError, CutoffLeakError, DomainError, OutOfTubeError
from fkdvlab.evolution import evolve
from fkdvlab.linearized import spectrum
from fkdvlab.spectral import Field, derivative, translate
from fkdvlab.stability import (
    StabilityConfig,
    antiderivative_x1,
    build_virial,
    cutoff,
    cutoff_derivative,
    epsilon_equation_residual,
    fit_translation,
    instability_sequence,
    modulation_rate_check,
    perturb_to_distance,
    localized_noise,
    run_stability_experiment,
    sequence_budget,
    track_trajectory,
    tube_distance,
)


@settings(max_examples=15, deadline=None)
@given(z=st.floats(-20.0, 20.0))
def test_translation_fit_recovers_shift(kdv_gs, z):
    u = translate(kdv_gs.Q, [-z])
    fit = fit_translation(u, kdv_gs)
    assert fit.z[0] == pytest.approx(z, abs=1e-9)
    assert np.max(np.abs(fit.eps.values)) < 1e-8


def test_translation_fit_orthogonality(kdv_gs):
    g = kdv_gs.grid
    bump = Field.from_function(g, lambda x: 0.05 * np.exp(-((x - 1.0) ** 2)))
    fit = fit_translation(translate(kdv_gs.Q, [2.0]) + bump, kdv_gs)
    assert np.max(fit.ortho_residuals) < 1e-10


def test_translation_fit_fails_far_from_the_orbit(kdv_gs):
    with pytest.raises(OutOfTubeError):
        fit_translation(Field.zeros(kdv_gs.grid), kdv_gs)


def test_tube_distance_vanishes_on_the_orbit(kdv_gs):
    d, z = tube_distance(translate(kdv_gs.Q, [3.3]), kdv_gs, return_shift=True)
    assert d < 1e-8
    # u = Q(. + 3.3), so u(. + z) = Q at z = -3.3
    assert z[0] == pytest.approx(-3.3, abs=1e-6)


def test_perturbation_hits_requested_distance(kdv_gs, rng):
    u = perturb_to_distance(kdv_gs, localized_noise(kdv_gs.grid, rng), 1e-3)
    assert tube_distance(u, kdv_gs) == pytest.approx(1e-3, rel=1e-6)


def test_cutoff_shape():
    s = np.array([0.0, 0.9, 1.0, 1.5, 2.0, 3.0, -1.5])
    v = cutoff(s)
    assert v[0] == v[1] == v[2] == 1.0
    assert 0 < v[3] < 1 and v[3] == v[6]
    assert v[4] == v[5] == 0.0
    h = 1e-6
    for x in (1.2, 1.5, 1.8, -1.3):
        fd = (cutoff(np.array([x + h])) - cutoff(np.array([x - h])))[0] / (2 * h)
        assert cutoff_derivative(np.array([x]))[0] == pytest.approx(fd, rel=1e-6)


def test_antiderivative_inverts_derivative(kdv_gs):
    Q = kdv_gs.Q
    F = antiderivative_x1(derivative(Q))
    assert np.allclose(F.values, Q.values - Q.values[0], atol=1e-10)
    ramp = antiderivative_x1(Q)
    assert ramp.values[0] == 0.0
    # the mean of Q makes the primitive climb to nearly the full integral
    assert ramp.values[-1] == pytest.approx(np.sum(Q.values) * kdv_gs.grid.h[0], rel=1e-2)
    h = kdv_gs.grid.h[0]
    assert np.allclose(np.gradient(ramp.values, h)[5:-5], Q.values[5:-5], atol=1e-2)


def test_virial_needs_supercritical_power(kdv_gs):
    sr = spectrum(kdv_gs, method="dense")
    with pytest.raises(CriticalityClassError):
        build_virial(kdv_gs, sr, 5.0)


def test_virial_cutoff_must_fit_in_the_box(gs_114):
    sr = spectrum(gs_114, method="krylov")
    with pytest.raises(CutoffLeakError):
        build_virial(gs_114, sr, 30.0)
    with pytest.raises(DomainError):
        build_virial(gs_114, sr, 0.5)
    vi = build_virial(gs_114, sr, 12.5)
    assert vi.beta > 0
    # the integrand is orthogonal to Q by the choice of beta
    assert abs(np.sum(vi.integrand.values * gs_114.Q.values)) < 1e-10 * np.sum(gs_114.Q.values**2)


def test_sequence_mass_identity_and_energy_deficit(gs_114):
    # n = 1 and 2 need a finer grid than this fixture
    for n in (4, 8):
        b = sequence_budget(n, gs_114)
        assert abs(b.mass_defect) < 1e-8
        assert b.energy_gap < 0
        assert b.energy_formula < 0


def test_sequence_rejects_nonpositive_index(gs_114):
    with pytest.raises(DomainError):
        instability_sequence(0, gs_114)


def test_stability_needs_subcritical_power(gs_114):
    with pytest.raises(CriticalityClassError):
        run_stability_experiment(gs_114, StabilityConfig(T=0.1))


def test_short_stability_run_stays_close(kdv_gs):
    rep = run_stability_experiment(kdv_gs, StabilityConfig(delta=1e-3, T=2.0, dt=0.01, snapshot_dt=0.2))
    assert rep.verdict == "stayed"
    assert rep.initial_distance == pytest.approx(1e-3, rel=1e-5)
    assert rep.sup_distance < 10 * 1e-3


def test_modulation_track_of_a_pure_soliton(kdv_gs):
    tr = evolve(kdv_gs.Q, kdv_gs.params, 1.0, dt=0.01, stride=10)
    track = track_trajectory(tr, kdv_gs)
    # the wave moves right, u = Q(. - t), so the fitted shift is z = t
    assert np.allclose(track.z[:, 0], np.asarray(tr.snapshot_times), atol=1e-6)
    assert np.max(track.eps_l2) < 1e-7
    rate = modulation_rate_check(track)
    assert np.all(rate.numerators < 1e-6)


def test_perturbation_equation_residual_is_small(kdv_gs):
    g = kdv_gs.grid
    bump = Field.from_function(g, lambda x: 0.01 * np.exp(-((x - 2) ** 2)))
    tr = evolve(kdv_gs.Q + bump, kdv_gs.params, 0.2, dt=0.001, stride=2)
    track = track_trajectory(tr, kdv_gs)
    res = epsilon_equation_residual(track, tr, kdv_gs)
    assert not res.accuracy_flag
    assert np.max(res.relative) < 1e-3
