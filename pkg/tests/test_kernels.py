from __future__ import annotations

import numpy as np
import pytest

from koranyi.heisenberg import (
    HPoint,
    PoleError,
    StencilParams,
    group_mul,
    horizontal_normal_derivative,
    ScalarField,
    sublaplacian_L0,
)
from koranyi.kernels import (
    FitError,
    KernelCoefficients,
    RegimeError,
    SeriesDimensionError,
    a0_constant,
    averaged_fundamental,
    averaged_fundamental_variation,
    closed_form_coefficient,
    fundamental_field,
    fundamental_flux,
    fundamental_solution,
    harmonic_correction,
    neumann_kernel,
    neumann_kernel_field,
    project_coefficients,
    series_averaged_fundamental,
    series_kelvin,
)
from koranyi.quadrature import integrate_surface, sphere_quadrature
from koranyi.special import circular_average

STENCIL = StencilParams(h=1e-3, order=4)


def test_a0_constant_for_h1() -> None:
    assert a0_constant(1) == pytest.approx(1 / (2 * np.pi))
    assert closed_form_coefficient(1, 4) == pytest.approx(a0_constant(1))
    assert closed_form_coefficient(2, 1) == pytest.approx(a0_constant(2) / 2)


def test_fundamental_solution_is_left_invariant() -> None:
    eta = HPoint([0.2 + 0.1j], -0.3)
    xi = HPoint([-0.4 + 0.5j], 0.2)
    q = HPoint([1.0 - 0.3j], 0.7)
    assert fundamental_solution(group_mul(q, eta), group_mul(q, xi)) == pytest.approx(
        fundamental_solution(eta, xi)
    )
    with pytest.raises(PoleError):
        fundamental_solution(eta, eta)
    with pytest.raises(PoleError):
        fundamental_flux(eta, eta)


def test_averaged_kernel_reduces_to_g_at_the_identity() -> None:
    xi = HPoint(np.array([[0.4 + 0.2j], [0.0 + 0.7j]]), np.array([0.3, -0.5]))
    identity = HPoint.identity(1)
    np.testing.assert_allclose(
        averaged_fundamental(identity, xi), fundamental_solution(identity, xi), rtol=1e-12
    )


def test_averaged_kernel_matches_the_theta_average() -> None:
    eta = HPoint(np.array([[0.3 + 0.0j], [0.1 - 0.2j], [0.0 + 0.4j]]), np.array([0.1, -0.2, 0.3]))
    xi = HPoint(np.array([[-0.5 + 0.1j], [0.6 + 0.3j], [0.2 - 0.1j]]), np.array([0.4, 0.1, -0.6]))
    quadrature = circular_average(fundamental_field(eta), xi, 256)
    np.testing.assert_allclose(averaged_fundamental(eta, xi), np.real(quadrature), atol=1e-8)


def test_fundamental_flux_matches_finite_differences(coarse_sphere) -> None:
    pole = HPoint([0.2 - 0.1j], 0.15)
    nodes = coarse_sphere.nodes
    numeric = horizontal_normal_derivative(fundamental_field(pole), nodes, STENCIL)
    np.testing.assert_allclose(fundamental_flux(pole, nodes), np.real(numeric), atol=1e-6)


def test_flux_through_the_sphere_is_minus_one(sphere) -> None:
    for pole in (HPoint.identity(1), HPoint([0.3 + 0.2j], -0.1)):
        flux = integrate_surface(sphere, fundamental_flux(pole, sphere.nodes))
        assert flux == pytest.approx(-1.0, abs=1e-3)


def test_fit_reproduces_the_closed_form_coefficients(coefficients) -> None:
    assert coefficients.residual <= 1e-4
    for m in range(coefficients.M + 1):
        assert coefficients.a[m, 0].real == pytest.approx(closed_form_coefficient(1, m), rel=1e-6)
    # On C^1 only bidegree zero carries a circular harmonic.
    assert np.all(coefficients.a[:, 1:] == 0)


def test_fit_with_the_pole_pinned_at_the_identity() -> None:
    pinned = project_coefficients(1, 6, 6, pairs=120, eta=HPoint.identity(1))
    assert pinned.a[0, 0].real == pytest.approx(a0_constant(1), abs=1e-6)
    assert pinned.pinned
    assert KernelCoefficients.from_document(pinned.to_document()).pinned
    assert not project_coefficients(1, 6, 6, pairs=120).pinned


def test_fit_is_independent_of_the_meridian_resolution() -> None:
    coarse = project_coefficients(1, 6, 0, sq=sphere_quadrature(1, (16, 32)), pairs=60)
    fine = project_coefficients(1, 6, 0, sq=sphere_quadrature(1, (16, 64)), pairs=60)
    np.testing.assert_allclose(fine.a.real, coarse.a.real, rtol=1e-6)


def test_identity_pole_fit_with_a_single_coefficient() -> None:
    coeffs = project_coefficients(1, 0, 0, pairs=60, eta=HPoint.identity(1))
    assert coeffs.a[0, 0].real == pytest.approx(1 / (2 * np.pi), rel=1e-10)
    assert coeffs.residual <= 1e-10


def test_fit_rejects_ratios_outside_the_unit_interval() -> None:
    with pytest.raises(ValueError):
        project_coefficients(1, 2, 0, ratio=1.0)


def test_ill_conditioned_fit_raises() -> None:
    with pytest.raises(FitError) as excinfo:
        project_coefficients(1, 6, 0, pairs=60, condition_limit=0.5)
    assert excinfo.value.condition >= 1.0 - 1e-9


def test_series_agrees_with_the_closed_form_in_its_regime(coefficients) -> None:
    eta = HPoint([0.2 + 0.1j], 0.05)
    xi = HPoint(np.array([[0.8 + 0.1j], [0.1 - 0.6j]]), np.array([0.2, -0.5]))
    series = series_averaged_fundamental(coefficients, eta, xi)
    np.testing.assert_allclose(series.value, averaged_fundamental(eta, xi), rtol=1e-3)
    with pytest.raises(RegimeError):
        series_averaged_fundamental(coefficients, xi[0], eta)
    with pytest.raises(RegimeError):
        series_kelvin(coefficients, HPoint([1.2 + 0j], 0.0), HPoint([1.0 + 0j], 0.0))


def test_neumann_kernel_is_centred_on_the_sphere(coefficients, check_pole, sphere) -> None:
    values = neumann_kernel(coefficients, check_pole, sphere.nodes)
    assert integrate_surface(sphere, values) == pytest.approx(0.0, abs=1e-10)


def test_neumann_kernel_flux_equals_that_of_g_at_the_identity(
    coefficients, check_pole, coarse_sphere
) -> None:
    nodes = coarse_sphere.nodes
    kernel = neumann_kernel_field(coefficients, check_pole)
    flux = horizontal_normal_derivative(kernel, nodes, STENCIL)
    expected = -2 * a0_constant(1) * np.sqrt(nodes.modulus_squared())
    np.testing.assert_allclose(np.real(flux), expected, atol=1e-3)


def test_neumann_kernel_is_harmonic_away_from_its_pole(coefficients, check_pole) -> None:
    points = HPoint(np.array([[-0.5 + 0.2j], [0.1 + 0.6j]]), np.array([-0.3, 0.4]))
    kernel = neumann_kernel_field(coefficients, check_pole)
    laplacian = sublaplacian_L0(kernel, points, STENCIL)
    np.testing.assert_allclose(laplacian, 0.0, atol=1e-5 * np.max(np.abs(kernel(points))))


def test_coefficient_document_keeps_the_table(coefficients) -> None:
    restored = KernelCoefficients.from_document(coefficients.to_document())
    np.testing.assert_allclose(restored.a, coefficients.a)
    assert restored.b0 == pytest.approx(coefficients.b0)
    assert restored.residual == pytest.approx(coefficients.residual)
    assert not restored.pinned


def test_coefficient_table_shape_is_checked() -> None:
    with pytest.raises(ValueError, match="does not match"):
        KernelCoefficients(n=1, M=2, K=2, a=np.zeros((2, 2)))


def test_series_paths_refuse_higher_dimensions() -> None:
    coeffs = KernelCoefficients(n=2, M=2, K=1, a=np.zeros((3, 2)))
    eta = HPoint([0.1 + 0j, 0.0 + 0j], 0.0)
    xi = HPoint([0.5 + 0j, 0.2j], 0.1)
    with pytest.raises(SeriesDimensionError) as excinfo:
        project_coefficients(2, 2, 1, pairs=20)
    assert excinfo.value.n == 2
    for evaluate in (series_kelvin, series_averaged_fundamental, neumann_kernel):
        with pytest.raises(SeriesDimensionError):
            evaluate(coeffs, eta, xi)


def test_kelvin_series_at_the_identity_is_the_leading_coefficient(
    coefficients, check_pole
) -> None:
    value = series_kelvin(coefficients, check_pole, HPoint.identity(1)).value
    assert value == pytest.approx(coefficients.a[0, 0].real, rel=1e-12)


def test_kelvin_series_and_correction_are_harmonic(coefficients, check_pole) -> None:
    points = HPoint(np.array([[-0.5 + 0.2j], [0.1 + 0.6j]]), np.array([-0.3, 0.4]))
    kelvin = ScalarField(
        lambda z, t: series_kelvin(coefficients, check_pole, HPoint(z, t)).value,
        n=1,
        circular=True,
    )
    correction = ScalarField(
        lambda z, t: harmonic_correction(coefficients, check_pole, HPoint(z, t)),
        n=1,
        circular=True,
    )
    for field in (kelvin, correction):
        laplacian = sublaplacian_L0(field, points, STENCIL)
        np.testing.assert_allclose(laplacian, 0.0, atol=1e-5 * np.max(np.abs(field(points))))


def test_averaged_kernel_variation_matches_a_dilation_difference() -> None:
    # One pair with x < 1/2 (hypergeometric branch) and one close to the orbit.
    eta = HPoint(np.array([[0.2 + 0j], [0.6 + 0j]]), np.array([0.05, 0.05]))
    xi = HPoint(np.array([[0.8 + 0.1j], [0.7 + 0j]]), np.array([0.2, 0.1]))
    h = 1e-5

    def dilated(s: float) -> np.ndarray:
        return averaged_fundamental(eta, HPoint(xi.z * s, xi.t * s**2))

    numeric = (dilated(1 + h) - dilated(1 - h)) / (2 * h)
    q, q_pole = xi.modulus_squared(), eta.modulus_squared()
    variation = averaged_fundamental_variation(
        q, xi.t, q_pole, eta.t, 2 * (q + 1j * xi.t), 8 * q * q_pole
    )
    np.testing.assert_allclose(variation, numeric, rtol=1e-6)


def test_averaged_kernel_variation_refuses_the_orbit() -> None:
    q = np.array([0.4])
    with pytest.raises(PoleError):
        averaged_fundamental_variation(q, q, q, q, q + 0j, q)
