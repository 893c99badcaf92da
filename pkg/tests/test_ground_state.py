import numpy as np
import pytest

from fkdvlab import functionals as fn
from fkdvlab.errors import DegenerateInitError, DomainError
from fkdvlab.ground_state import (
    bessel_kernel_profile,
    constrained_minimize,
    decay_fit,
    evenness_defect,
    fit_power_law,
    kernel_tail_constant,
    periodized_power,
    petviashvili_solve,
    rescale,
    resample_scaled,
    speed_for_mass,
)
from fkdvlab.params import ModelParams
from fkdvlab.spectral import Field, l2_norm, make_grid, sobolev_norm
from fkdvlab.stability import tube_distance


def test_kdv_profile_matches_sech2(kdv_gs):
    x = kdv_gs.grid.coords[0]
    assert np.max(np.abs(kdv_gs.Q.values - 3 / np.cosh(x / 2) ** 2)) < 1e-8
    assert kdv_gs.evenness < 1e-10
    assert kdv_gs.peak[0][0] == pytest.approx(0.0, abs=1e-10)


def test_bo_profile_is_close_to_lorentzian(bo_gs):
    x = bo_gs.grid.coords[0]
    # periodic images shift the profile by O(1/L)
    assert np.max(np.abs(bo_gs.Q.values - 4 / (1 + x**2))) < 5e-2
    assert bo_gs.min_value < 0.01


def test_speed_rescaling_law(kdv_gs):
    gs2 = rescale(kdv_gs, 2.0)
    x = kdv_gs.grid.coords[0]
    assert np.max(np.abs(gs2.Q.values - 6 / np.cosh(x / np.sqrt(2)) ** 2)) < 1e-8
    raw = rescale(kdv_gs, 2.0, polish=False)
    assert np.max(np.abs(raw.Q.values - gs2.Q.values)) < 1e-6


def test_rescale_rejects_nonpositive_speed(kdv_gs):
    with pytest.raises(DomainError):
        rescale(kdv_gs, 0.0)


def test_negative_guess_is_degenerate():
    g = make_grid(1, 40.0, 256)
    guess = Field.from_function(g, lambda x: -np.exp(-(x**2)))
    with pytest.raises(DegenerateInitError):
        petviashvili_solve(ModelParams(1, 2.0, 2), g, init=guess)


def test_shifted_guess_is_recentred():
    g = make_grid(1, 80.0, 512)
    guess = Field.from_function(g, lambda x: np.exp(-((x - 7.3) ** 2) / 4))
    gs = petviashvili_solve(ModelParams(1, 2.0, 3), g, init=guess)
    assert abs(gs.peak[0][0]) < 1e-6
    assert evenness_defect(gs.Q) < 1e-6


def test_two_dimensional_solve_is_radial():
    g = make_grid(2, 40.0, 64)
    gs = petviashvili_solve(ModelParams(2, 2.0, 2), g)
    v = gs.Q.values
    assert np.allclose(v, v.T, atol=1e-8)
    assert fn.pohozaev_residuals(gs).max() < 1e-6


def test_resample_scaled_preserves_a_resolved_profile(kdv_gs):
    u = resample_scaled(kdv_gs.Q, kdv_gs.params, 1.0, 1.0)
    assert np.max(np.abs(u.values - kdv_gs.Q.values)) < 1e-12
    half = resample_scaled(kdv_gs.Q, kdv_gs.params, 2.0, 0.5)
    x = kdv_gs.grid.coords[0]
    assert np.max(np.abs(half.values - 6 / np.cosh(x / 4) ** 2)) < 1e-7


@pytest.mark.parametrize("exponent, parity", [(-2.0, 1), (-2.5, 1), (-3.0, -1)])
def test_periodized_fit_recovers_exponent(exponent, parity):
    L = 800.0
    r = np.linspace(5.0, 200.0, 400)
    v = 3.0 * periodized_power(r, exponent, L, parity=parity)
    fit = fit_power_law(r, v, (20.0, 100.0), exponent, period=L, parity=parity)
    assert fit.exponent == pytest.approx(exponent, rel=1e-4)


def test_bo_decay_exponents(bo_gs):
    q = decay_fit(bo_gs.Q, 0, 1.0)
    dq = decay_fit(bo_gs.Q, 1, 1.0)
    assert q.relative_error < 0.05
    assert dq.relative_error < 0.05


def test_decay_fit_rejects_local_dispersion(kdv_gs):
    with pytest.raises(DomainError):
        decay_fit(kdv_gs.Q, 0, 2.0)


def test_kernel_plateau_on_moderate_box():
    g = make_grid(1, 4000.0, 2**15)
    fit = bessel_kernel_profile(1.5, 1.0, g)
    assert abs(fit.plateau_slope) < 0.1
    assert fit.plateau == pytest.approx(kernel_tail_constant(1.5, 1.0), rel=0.02)


def test_kernel_rejects_bad_inputs():
    g = make_grid(1, 100.0, 256)
    with pytest.raises(DomainError):
        bessel_kernel_profile(1.0, 0.0, g)
    with pytest.raises(DomainError):
        bessel_kernel_profile(2.0, 1.0, g)


def test_constrained_minimizer_recovers_kdv_soliton(kdv_gs):
    target = fn.mass(rescale(kdv_gs, 1.5).Q)
    res = constrained_minimize(target, kdv_gs.params, kdv_gs.grid, tol=1e-9)
    c = speed_for_mass(target, kdv_gs)
    assert c == pytest.approx(1.5, rel=1e-8)
    ref = rescale(kdv_gs, c)
    assert fn.mass(res.v) == pytest.approx(target, rel=1e-12)
    assert tube_distance(res.v, ref) / sobolev_norm(ref.Q, 1.0) < 1e-6
    assert res.multiplier == pytest.approx(c, rel=1e-6)
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(res.energies, res.energies[1:]))


def test_constrained_minimizer_needs_subcritical_power():
    g = make_grid(1, 80.0, 256)
    with pytest.raises(DomainError):
        constrained_minimize(1.0, ModelParams(1, 1.0, 4), g)
