"""Interior Neumann problem L₀u = f in B, ∂⊥u = g on ∂B, for circular data.

Two routes are offered: the representation formula with the series Neumann
kernel, and the second-kind boundary integral equation preceded by a
Newtonian particular solution. Both report u modulo constants, anchored so
that u(e) = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from koranyi.heisenberg import (
    DEFAULT_CHAR_THRESHOLD,
    HPoint,
    ScalarField,
    StencilParams,
    horizontal_normal_derivative,
    outer_pairs,
    polar_h1,
    sublaplacian_L0,
)
from koranyi.kernels import (
    FitError,
    KernelCoefficients,
    fundamental_flux,
    fundamental_solution,
    neumann_kernel,
    regular_part,
)
from koranyi.layers import (
    CompatibilityError,
    DensityVector,
    DiagRule,
    single_layer,
    solve_integral_equation,
)
from koranyi.quadrature import (
    SurfaceQuadrature,
    VolumeQuadrature,
    integrate_surface,
    integrate_volume,
    ray_quadrature,
    solvability_check,
    sphere_quadrature,
)

logger = logging.getLogger(__name__)

Method = Literal["kernel", "bie"]

PROBE_CUTOFF = 0.7
DEFAULT_RAY_RES = (10, 16, 16)
RESIDUAL_STENCIL = StencilParams(h=0.05, order=4)
INTERPOLANT_DEGREE = 3
MAX_FIT_RESIDUAL = 1e-3
CONSTANT_MODE_NOTE = "u is determined up to an additive constant; anchored so that u(e) = 0."


@dataclass(frozen=True)
class NeumannProblem:
    f: ScalarField
    g: ScalarField
    n: int = 1
    tol_compat: float = 1e-3
    name: str = "custom"
    exact: ScalarField | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        for label, fld in (("f", self.f), ("g", self.g)):
            if fld.n != self.n:
                raise ValueError(f"{label} is defined on H_{fld.n}, expected H_{self.n}.")
            if not fld.circular:
                raise ValueError(f"{label} must be circular.")
        if self.tol_compat <= 0:
            raise ValueError("tol_compat must be positive.")
        rng = np.random.default_rng(0)
        sample = HPoint(
            rng.uniform(-0.7, 0.7, size=(8, self.n))
            + 1j * rng.uniform(-0.7, 0.7, size=(8, self.n)),
            rng.uniform(-0.5, 0.5, size=8),
        )
        for label, fld in (("f", self.f), ("g", self.g)):
            defect = fld.circularity_defect(sample)
            if defect > 1e-8:
                raise ValueError(f"{label} is flagged circular but varies by {defect:.3g}.")

    def is_homogeneous_source(self, vq: VolumeQuadrature) -> bool:
        return bool(np.all(self.f(vq.nodes) == 0))


@dataclass(frozen=True)
class SolutionReport:
    method: str
    probes: HPoint
    u_samples: np.ndarray
    interior_residual: float
    boundary_residual: float
    compat_gap: float
    constant_mode_note: str = CONSTANT_MODE_NOTE
    max_error: float | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.interior_residual < 0 or self.boundary_residual < 0:
            raise ValueError("Residuals must be non-negative.")

    def to_document(self) -> dict[str, Any]:
        document: dict[str, Any] = {
            "method": self.method,
            "interior_residual": self.interior_residual,
            "boundary_residual": self.boundary_residual,
            "compat_gap": self.compat_gap,
            "constant_mode_note": self.constant_mode_note,
            "probe_count": int(self.u_samples.size),
        }
        if self.max_error is not None:
            document["max_error"] = self.max_error
        document.update(self.details)
        return document

    def rows(self) -> list[list[float]]:
        """Probe rows z_re, z_im, t, value."""
        z = self.probes.z[..., 0]
        return [
            [float(zj.real), float(zj.imag), float(tj), float(uj)]
            for zj, tj, uj in zip(z, self.probes.t, self.u_samples, strict=True)
        ]


def probe_grid(
    res: tuple[int, int, int] = (4, 4, 5), cutoff: float = PROBE_CUTOFF
) -> HPoint:
    """Tensor polar grid of interior probes with N ≤ cutoff, plus the identity."""
    n_r, n_phi, n_alpha = res
    if not 0 < cutoff < 1:
        raise ValueError(f"Probe cutoff must lie in (0, 1), got {cutoff}.")
    radii = np.linspace(cutoff / n_r, cutoff, n_r)
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    alpha = np.linspace(-np.pi / 2, np.pi / 2, n_alpha + 2)[1:-1]
    grid = np.meshgrid(radii, phi, alpha, indexing="ij")
    points = polar_h1("to", tuple(grid))
    identity = HPoint.identity(1)
    return HPoint(
        np.concatenate([identity.z[None, :], points.z.reshape(-1, 1)]),
        np.concatenate([[0.0], points.t.reshape(-1)]),
    )


@dataclass(frozen=True)
class CircularInterpolant:
    """Least-squares polynomial in (|z|², t) through probe samples."""

    powers: tuple[tuple[int, int], ...]
    coefficients: np.ndarray

    @classmethod
    def fit(
        cls, probes: HPoint, values: np.ndarray, degree: int = INTERPOLANT_DEGREE
    ) -> CircularInterpolant:
        powers = tuple((a, b) for a in range(degree + 1) for b in range(degree + 1 - a))
        rho2 = probes.modulus_squared()
        design = np.stack([rho2**a * probes.t**b for a, b in powers], axis=-1)
        coefficients, *_ = np.linalg.lstsq(design, np.real(values), rcond=None)
        return cls(powers=powers, coefficients=coefficients)

    def __call__(self, z: np.ndarray, t: np.ndarray) -> np.ndarray:
        rho2 = np.sum(np.abs(z) ** 2, axis=-1)
        total = np.zeros(np.shape(t))
        for (a, b), c in zip(self.powers, self.coefficients, strict=True):
            total = total + c * rho2**a * np.asarray(t) ** b
        return total

    def field(self, n: int = 1) -> ScalarField:
        return ScalarField(self, n=n, circular=True, name="u_interp")


def verify_solution(
    u: ScalarField,
    prob: NeumannProblem,
    s: StencilParams = RESIDUAL_STENCIL,
    *,
    probes: HPoint | None = None,
    boundary: HPoint | None = None,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> tuple[float, float]:
    """(max |L₀u − f| over interior probes, max |∂⊥u − g| over boundary probes)."""
    probes = probe_grid() if probes is None else probes
    boundary = sphere_quadrature(prob.n, (16, 16)).nodes if boundary is None else boundary
    interior = np.abs(sublaplacian_L0(u, probes, s) - prob.f(probes))
    flux = horizontal_normal_derivative(u, boundary, s, char_threshold=char_threshold)
    edge = np.abs(flux - prob.g(boundary))
    return float(np.max(interior)), float(np.max(edge))


def _anchored_error(u: np.ndarray, exact: np.ndarray) -> float:
    difference = (u - exact) - np.mean(u - exact)
    reference = exact - np.mean(exact)
    return float(np.max(np.abs(difference)) / max(float(np.max(np.abs(reference))), 1e-300))


def _check_compatibility(
    prob: NeumannProblem, sq: SurfaceQuadrature, vq: VolumeQuadrature
) -> float:
    result = solvability_check(prob.f, prob.g, sq, vq, prob.tol_compat)
    if not result.passed:
        raise CompatibilityError(result.gap, prob.tol_compat)
    return result.gap


def newtonian_potential(
    f: ScalarField, eta: HPoint, ray_res: tuple[int, int, int] = DEFAULT_RAY_RES
) -> np.ndarray:
    """Vf(η) = ∫_B g_η(ξ) f(ξ) dv(ξ), one pole-centred ray rule per point."""
    values = []
    for index in np.ndindex(eta.shape):
        pole = eta[index]
        rule = ray_quadrature(pole, ray_res)
        kernel = fundamental_solution(pole, rule.nodes)
        values.append(integrate_volume(rule, kernel * f(rule.nodes)))
    return np.asarray(values, dtype=float).reshape(eta.shape)


def newtonian_flux(
    f: ScalarField,
    boundary: HPoint,
    ray_res: tuple[int, int, int] = DEFAULT_RAY_RES,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> np.ndarray:
    """∂⊥(Vf) at boundary points, as ∫_B f(ξ) ∂⊥_ζ g_ξ(ζ) dv(ξ) over rays from ζ."""
    values = []
    for index in np.ndindex(boundary.shape):
        point = boundary[index]
        rule = ray_quadrature(point, ray_res, allow_boundary=True)
        point_b = HPoint(
            np.broadcast_to(point.z, rule.nodes.z.shape), np.broadcast_to(point.t, rule.nodes.shape)
        )
        kernel = fundamental_flux(rule.nodes, point_b, char_threshold)
        values.append(integrate_volume(rule, kernel * f(rule.nodes)))
    return np.asarray(values, dtype=float).reshape(boundary.shape)


def _kernel_potential(
    coeffs: KernelCoefficients,
    prob: NeumannProblem,
    eta: HPoint,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    ray_res: tuple[int, int, int],
    homogeneous: bool,
) -> np.ndarray:
    # u(η) = ∫_{∂B} N_B g dσ − ∫_B N_B f dv, up to a constant.
    pole_b, node_b = outer_pairs(eta, sq.nodes)
    kernel = neumann_kernel(coeffs, pole_b, node_b, 0.0)
    boundary_term = integrate_surface(sq, kernel * prob.g(sq.nodes))
    if homogeneous:
        return np.real(boundary_term)
    pole_v, node_v = outer_pairs(eta, vq.nodes)
    regular = integrate_volume(vq, regular_part(coeffs, pole_v, node_v, 0.0) * prob.f(vq.nodes))
    # For circular f the averaged kernel integrates like the fundamental solution itself.
    singular = newtonian_potential(prob.f, eta, ray_res)
    return np.real(boundary_term - regular - singular)


def _finish(
    method: str,
    prob: NeumannProblem,
    probes: HPoint,
    raw: np.ndarray,
    gap: float,
    stencil: StencilParams,
    details: dict[str, Any],
) -> SolutionReport:
    u = raw - raw[0]
    interpolant = CircularInterpolant.fit(probes, u).field(prob.n)
    interior, boundary = verify_solution(interpolant, prob, stencil, probes=probes[1:])
    max_error = None
    if prob.exact is not None:
        max_error = _anchored_error(u, np.real(prob.exact(probes)))
    logger.info(
        "%s solve of %s: interior %.3e, boundary %.3e", method, prob.name, interior, boundary
    )
    return SolutionReport(
        method=method,
        probes=probes,
        u_samples=u,
        interior_residual=interior,
        boundary_residual=boundary,
        compat_gap=gap,
        max_error=max_error,
        details=details,
    )


def solve_via_kernel(
    prob: NeumannProblem,
    coeffs: KernelCoefficients,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    *,
    probes: HPoint | None = None,
    ray_res: tuple[int, int, int] = DEFAULT_RAY_RES,
    stencil: StencilParams = RESIDUAL_STENCIL,
    max_fit_residual: float = MAX_FIT_RESIDUAL,
) -> SolutionReport:
    """Representation formula with the series Neumann kernel; probes[0] must be e."""
    gap = _check_compatibility(prob, sq, vq)
    if coeffs.n != prob.n:
        raise ValueError(f"Coefficients are for n={coeffs.n}, problem has n={prob.n}.")
    if coeffs.pinned:
        raise FitError("Coefficients fitted at the pole e cannot serve moving poles.", float("nan"))
    if not coeffs.residual <= max_fit_residual:
        raise FitError(
            f"Kernel coefficient residual {coeffs.residual:.3g} exceeds {max_fit_residual:.3g}.",
            float("nan"),
        )
    probes = probe_grid() if probes is None else probes
    homogeneous = prob.is_homogeneous_source(vq)
    raw = _kernel_potential(coeffs, prob, probes, sq, vq, ray_res, homogeneous)
    details = {"kernel_M": coeffs.M, "kernel_K": coeffs.K, "kernel_residual": coeffs.residual}
    return _finish("kernel", prob, probes, raw, gap, stencil, details)


def solve_via_bie(
    prob: NeumannProblem,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    *,
    probes: HPoint | None = None,
    ray_res: tuple[int, int, int] = DEFAULT_RAY_RES,
    stencil: StencilParams = RESIDUAL_STENCIL,
    diag_rule: DiagRule = "corrected",
) -> SolutionReport:
    """u = −Vf + single layer of 2ψ, where (I + K′)ψ = g + ∂⊥(Vf)."""
    gap = _check_compatibility(prob, sq, vq)
    probes = probe_grid() if probes is None else probes
    homogeneous = prob.is_homogeneous_source(vq)

    boundary_data = np.real(prob.g(sq.nodes)).astype(float)
    particular = np.zeros(probes.shape)
    if not homogeneous:
        boundary_data = boundary_data + newtonian_flux(prob.f, sq.nodes, ray_res)
        particular = -newtonian_potential(prob.f, probes, ray_res)
    # Quadrature leaves a small mean in the adjusted flux; it is orthogonal to the range.
    drift = float(integrate_surface(sq, boundary_data)) / sq.area
    logger.debug("Adjusted boundary flux has mean %.3e before projection", drift)
    density = DensityVector(boundary_data - drift, sq)
    psi, solve_report = solve_integral_equation(density, tol=prob.tol_compat, diag_rule=diag_rule)
    layer = single_layer(DensityVector(2.0 * psi.values, sq), probes)
    raw = particular + np.real(layer)
    details = {"bie": solve_report.to_document(), "flux_drift": drift}
    return _finish("bie", prob, probes, raw, gap, stencil, details)


def cross_method_deviation(first: SolutionReport, second: SolutionReport) -> float:
    """Standard deviation over probes of the difference, after mean removal."""
    if first.u_samples.shape != second.u_samples.shape:
        raise ValueError("Reports were computed on different probe grids.")
    difference = first.u_samples - second.u_samples
    return float(np.std(difference - np.mean(difference)))
