from __future__ import annotations

import numpy as np
import pytest

from koranyi.heisenberg import (
    CharacteristicPointError,
    DimensionMismatchError,
    HPoint,
    PoleError,
    ScalarField,
    StencilParams,
    VectorField,
    apply_field,
    commutator,
    dilate,
    gauge_norm,
    group_mul,
    horizontal_normal_derivative,
    inverse,
    inversion,
    kelvin_transform,
    left_translate,
    outer_pairs,
    polar_h1,
    shift_along_normal,
    sublaplacian_L0,
)

STENCIL = StencilParams(h=1e-3, order=4)


def _random_points(count: int, n: int = 1, seed: int = 0) -> HPoint:
    rng = np.random.default_rng(seed)
    return HPoint(
        rng.uniform(-1, 1, (count, n)) + 1j * rng.uniform(-1, 1, (count, n)),
        rng.uniform(-1, 1, count),
    )


def _field(func, n: int = 1, circular: bool = False) -> ScalarField:
    return ScalarField(func, n=n, circular=circular)


def _sphere_points() -> HPoint:
    phi, alpha = np.meshgrid(np.linspace(0, 2 * np.pi, 7), np.linspace(-1.3, 1.3, 9))
    return polar_h1("to", (np.ones_like(phi).ravel(), phi.ravel(), alpha.ravel()))


def test_group_law_is_associative_with_inverses() -> None:
    batch = _random_points(3, n=2, seed=1)
    p, q, r = batch[0], batch[1], batch[2]

    left = group_mul(group_mul(p, q), r)
    right = group_mul(p, group_mul(q, r))
    np.testing.assert_allclose(left.z, right.z, atol=1e-14)
    np.testing.assert_allclose(left.t, right.t, atol=1e-14)

    unit = group_mul(p, inverse(p))
    np.testing.assert_allclose(unit.z, 0.0, atol=1e-15)
    np.testing.assert_allclose(unit.t, 0.0, atol=1e-15)


def test_group_law_twists_the_vertical_coordinate() -> None:
    product = group_mul(HPoint([1.0 + 0j], 0.0), HPoint([1j], 0.0))
    # 2 Im(1 · conj(i)) = −2
    assert product.t == pytest.approx(-2.0)
    np.testing.assert_allclose(product.z, [1 + 1j])


def test_gauge_norm_is_homogeneous_under_dilations() -> None:
    points = _random_points(20)
    np.testing.assert_allclose(gauge_norm(dilate(points, 2.5)), 2.5 * gauge_norm(points))


def test_outer_pairs_puts_poles_on_leading_axes() -> None:
    poles = _random_points(3)
    points = _random_points(5, seed=4)
    pole_b, point_b = outer_pairs(poles, points)
    assert pole_b.shape == (3, 5)
    np.testing.assert_allclose(pole_b.t[:, 0], poles.t)
    np.testing.assert_allclose(point_b.t[0], points.t)


def test_mixed_dimensions_are_rejected() -> None:
    with pytest.raises(DimensionMismatchError):
        group_mul(HPoint.identity(1), HPoint.identity(2))


def test_commutator_of_horizontal_fields_is_minus_four_t() -> None:
    points = _random_points(50)
    f = _field(lambda z, t: z[..., 0].real ** 2 * z[..., 0].imag + t**2)
    bracket = commutator(VectorField.X, VectorField.Y, f, points, STENCIL)
    vertical = apply_field(VectorField.T, f, points, STENCIL)
    np.testing.assert_allclose(bracket, -4.0 * vertical, atol=1e-6)


def test_left_invariant_fields_commute_with_translation() -> None:
    q = HPoint([0.2 - 0.4j], 0.3)
    points = _random_points(10)
    f = _field(lambda z, t: np.sin(z[..., 0].real) * t + z[..., 0].imag ** 3)
    translated = left_translate(q, f)
    direct = apply_field(VectorField.X, translated, points, STENCIL)
    moved = apply_field(VectorField.X, f, group_mul(q, points), STENCIL)
    np.testing.assert_allclose(direct, moved, atol=1e-8)


@pytest.mark.parametrize("n", [1, 2])
def test_sublaplacian_of_modulus_squared_is_n(n: int) -> None:
    points = _random_points(10, n=n)
    f = _field(lambda z, t: np.sum(np.abs(z) ** 2, axis=-1), n=n, circular=True)
    np.testing.assert_allclose(sublaplacian_L0(f, points, STENCIL), float(n), atol=1e-7)


def test_t_is_harmonic() -> None:
    points = _random_points(10)
    f = _field(lambda z, t: t, circular=True)
    np.testing.assert_allclose(sublaplacian_L0(f, points, STENCIL), 0.0, atol=1e-7)


def test_normal_derivatives_of_manufactured_solutions() -> None:
    points = _sphere_points()
    modulus = np.sqrt(points.modulus_squared())
    t_field = _field(lambda z, t: t, circular=True)
    z2_field = _field(lambda z, t: np.sum(np.abs(z) ** 2, axis=-1), circular=True)

    np.testing.assert_allclose(
        horizontal_normal_derivative(t_field, points, STENCIL).real,
        2 * modulus * points.t,
        atol=1e-7,
    )
    np.testing.assert_allclose(
        horizontal_normal_derivative(z2_field, points, STENCIL).real, 2 * modulus**3, atol=1e-7
    )


def test_characteristic_points_need_a_limit() -> None:
    pole = HPoint([0j], 1.0)
    f = _field(lambda z, t: t, circular=True)
    with pytest.raises(CharacteristicPointError):
        horizontal_normal_derivative(f, pole, STENCIL)
    value = horizontal_normal_derivative(f, pole, STENCIL, limit=0.0)
    assert value == 0.0


def test_shift_along_normal_crosses_the_sphere() -> None:
    points = _sphere_points()
    outside = shift_along_normal(points, 1e-2)
    inside = shift_along_normal(points, -1e-2)
    assert np.all(gauge_norm(outside) > 1.0)
    assert np.all(gauge_norm(inside) < 1.0)


def test_inversion_is_an_involution_that_swaps_inside_and_outside() -> None:
    points = _random_points(20, n=2)
    image = inversion(points)
    np.testing.assert_allclose(gauge_norm(image), 1.0 / gauge_norm(points))
    back = inversion(image)
    np.testing.assert_allclose(back.z, points.z, atol=1e-12)
    np.testing.assert_allclose(back.t, points.t, atol=1e-12)
    with pytest.raises(PoleError):
        inversion(HPoint.identity(1))


def test_kelvin_transform_keeps_harmonic_functions_harmonic() -> None:
    rng = np.random.default_rng(7)
    raw = _random_points(20, seed=7)
    radius = rng.uniform(0.6, 1.5, size=20)
    scale = radius / gauge_norm(raw)
    points = HPoint(raw.z * scale[:, None], raw.t * scale**2)
    transformed = kelvin_transform(_field(lambda z, t: t, circular=True))
    np.testing.assert_allclose(sublaplacian_L0(transformed, points, STENCIL), 0.0, atol=1e-5)


def test_polar_coordinates_invert() -> None:
    r = np.array([0.5, 1.0, 1.7])
    phi = np.array([0.1, 2.0, 5.5])
    alpha = np.array([-1.2, 0.0, 0.9])
    point = polar_h1("to", (r, phi, alpha))
    np.testing.assert_allclose(gauge_norm(point), r)
    back = polar_h1("from", point)
    np.testing.assert_allclose(back[0], r)
    np.testing.assert_allclose(back[1], phi)
    np.testing.assert_allclose(back[2], alpha)


def test_polar_angle_outside_range_is_rejected() -> None:
    with pytest.raises(ValueError, match="Polar angle"):
        polar_h1("to", (np.array([1.0]), np.array([0.0]), np.array([2.0])))
