import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkdvlab.errors import ConfigurationError, DomainError, GridMismatchError
from fkdvlab.spectral import (
    Field,
    commutator_check,
    dealiased_product,
    derivative,
    exact_integral_of_product,
    fractional_derivative,
    inner,
    integral,
    l2_norm,
    make_grid,
    moment_test_field,
    padding_factor,
    sobolev_norm,
    translate,
)


def test_grid_layout():
    g = make_grid(1, 2 * math.pi, 32)
    assert g.shape == (32,)
    assert g.spec_shape == (17,)
    assert g.h == pytest.approx((2 * math.pi / 32,))
    assert g.coords[0][0] == pytest.approx(-math.pi)
    assert not g.nyquist_mask[-1]
    assert g.max_wavenumber == pytest.approx(16.0)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ConfigurationError):
        make_grid(1, 10.0, 100)
    with pytest.raises(ConfigurationError):
        make_grid(1, -1.0, 64)
    with pytest.raises(ConfigurationError):
        make_grid(3, 10.0, 64)


def test_two_dimensional_grid():
    g = make_grid(2, [20.0, 10.0], [64, 32])
    assert g.shape == (64, 32)
    assert g.volume == pytest.approx(200.0)
    assert g.coords[0].shape[0] == 64


def test_derivative_and_riesz_on_trig():
    g = make_grid(1, 2 * math.pi, 64)
    x = g.coords[0]
    f = Field(g, np.cos(3 * x))
    assert np.allclose(derivative(f).values, -3 * np.sin(3 * x), atol=1e-12)
    assert np.allclose(derivative(f, order=2).values, -9 * np.cos(3 * x), atol=1e-11)
    assert np.allclose(fractional_derivative(f, 0.7).values, 3**0.7 * np.cos(3 * x), atol=1e-12)


def test_riesz_two_dimensional_radial_symbol():
    g = make_grid(2, [2 * math.pi, 2 * math.pi], [32, 32])
    x, y = np.meshgrid(*g.axes, indexing="ij")
    f = Field(g, np.cos(3 * x + 4 * y))
    assert np.allclose(fractional_derivative(f, 1.5).values, 5**1.5 * f.values, atol=1e-10)


def test_integrals_and_norms():
    g = make_grid(1, 40.0, 512)
    f = Field.from_function(g, lambda x: np.exp(-(x**2)))
    assert integral(f) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert l2_norm(f) ** 2 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert inner(f, f) == pytest.approx(l2_norm(f) ** 2)
    assert sobolev_norm(f, 0.0) == pytest.approx(l2_norm(f), rel=1e-12)
    assert sobolev_norm(f, 1.0) > l2_norm(f)


def test_padding_factor():
    assert [padding_factor(k) for k in (1, 2, 3, 4, 5)] == [1, 2, 2, 3, 3]


def test_dealiased_product_is_exact_for_band_limited_inputs():
    g = make_grid(1, 2 * math.pi, 32)
    x = g.coords[0]
    a = Field(g, np.cos(11 * x))
    b = Field(g, np.cos(12 * x))
    # cos11 cos12 = (cos x + cos 23x)/2, and 23 lies beyond the band
    prod = dealiased_product(a, b)
    assert np.allclose(prod.values, 0.5 * np.cos(x), atol=1e-13)
    # plain collocation aliases 23 onto -9
    assert not np.allclose(a.values * b.values, 0.5 * np.cos(x), atol=1e-3)


def test_exact_integral_of_product():
    g = make_grid(1, 2 * math.pi, 32)
    x = g.coords[0]
    a = Field(g, np.cos(15 * x))
    assert exact_integral_of_product(a, a, a, a) == pytest.approx(2 * math.pi * 3 / 8, rel=1e-12)


def test_translate_shifts_a_gaussian():
    g = make_grid(1, 40.0, 256)
    f = Field.from_function(g, lambda x: np.exp(-(x**2)))
    moved = translate(f, [1.3])
    expected = np.exp(-((g.coords[0] + 1.3) ** 2))
    assert np.allclose(moved.values, expected, atol=1e-12)


def test_grid_mismatch():
    a = Field.zeros(make_grid(1, 10.0, 32))
    b = Field.zeros(make_grid(1, 10.0, 64))
    with pytest.raises(GridMismatchError):
        a + b


@pytest.mark.parametrize("order", [0.5, 1.0, 1.5, 1.9])
@pytest.mark.parametrize("d, L, N", [(1, 80.0, 2048), (2, 100.0, 256)])
def test_commutator_identity_on_moment_field(order, d, L, N):
    g = make_grid(d, L, N)
    f = moment_test_field(g, max(1.0, 4 * max(g.h)))
    for axis in range(d):
        chk = commutator_check(f, order, axis)
        assert chk.residual < 1e-8
        assert not chk.edge_warning


def test_commutator_residual_grows_for_few_moments():
    # two vanishing moments leave a tail that meets the box edge
    g = make_grid(1, 40.0, 512)
    few = commutator_check(moment_test_field(g, 1.0, n=1), 0.5).residual
    many = commutator_check(moment_test_field(g, 1.0, n=4), 0.5).residual
    assert many < 1e-3 * few


def test_moment_field_is_centred_and_mean_free():
    g = make_grid(1, 40.0, 512)
    f = moment_test_field(g, 1.0)
    assert abs(integral(f)) < 1e-12 * l2_norm(f)
    assert np.argmax(np.abs(f.values)) == g.N[0] // 2


def test_commutator_rejects_bad_order():
    g = make_grid(1, 10.0, 32)
    with pytest.raises(DomainError):
        commutator_check(Field.zeros(g), 2.5)


@settings(max_examples=25, deadline=None)
@given(z1=st.floats(-5, 5), z2=st.floats(-5, 5))
def test_translations_compose(z1, z2):
    g = make_grid(1, 40.0, 128)
    f = Field.from_function(g, lambda x: np.exp(-(x**2) / 2))
    lhs = translate(translate(f, [z1]), [z2])
    rhs = translate(f, [z1 + z2])
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.1, 2.0), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_riesz_is_linear(s, a, b):
    g = make_grid(1, 20.0, 64)
    f = Field.from_function(g, lambda x: np.exp(-(x**2)))
    h = Field.from_function(g, lambda x: x * np.exp(-(x**2)))
    lhs = fractional_derivative(f * a + h * b, s)
    rhs = fractional_derivative(f, s) * a + fractional_derivative(h, s) * b
    assert np.allclose(lhs.values, rhs.values, atol=1e-10)
