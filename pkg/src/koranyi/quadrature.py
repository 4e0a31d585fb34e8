"""Quadrature on the Korányi sphere and ball of H_1.

The sphere is charted by the polar coordinates at r = 1: ρ = cos^{1/2}α,
t = sin α, and φ uses the periodic trapezoid rule. On the sphere the α nodes
are midpoints of a uniform grid in θ with α = −(π/2)cos θ: the rings then
sit at ρ ≈ (√π/2)θ, evenly spaced, and every node has its neighbours placed
symmetrically about it, across the characteristic poles too. Volume
and ray rules use Gauss-Legendre nodes pulled back through
α = (π/2)·u(3 − u²)/2 instead. Neither rule has a node at a pole.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss

from koranyi.heisenberg import (
    DEFAULT_CHAR_THRESHOLD,
    DimensionMismatchError,
    HPoint,
    ScalarField,
    StencilParams,
    dilate,
    euclidean_gradient,
    gauge_norm,
    group_mul,
    horizontal_gradient,
    horizontal_normal_derivative,
    polar_h1,
    sublaplacian_L0,
)

logger = logging.getLogger(__name__)

MIN_ANGULAR_NODES = 8
MIN_RADIAL_NODES = 4
MIN_RAY_RADIUS = 1e-9
WEIGHT_STENCIL = StencilParams(h=1e-3, order=4)


class QuadratureError(ValueError):
    """Raised for unsupported dimensions or resolutions below the minimum."""


@dataclass(frozen=True)
class SurfaceQuadrature:
    nodes: HPoint
    weights: np.ndarray
    char_excluded: bool = True
    resolution: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != self.nodes.shape:
            raise QuadratureError(f"Weights {weights.shape} and nodes {self.nodes.shape} differ.")
        if np.any(weights <= 0):
            raise QuadratureError("Surface weights must be positive.")
        object.__setattr__(self, "weights", weights)

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)

    def to_document(self) -> dict[str, Any]:
        return _rule_document(self.nodes, self.weights)


@dataclass(frozen=True)
class VolumeQuadrature:
    nodes: HPoint
    weights: np.ndarray
    resolution: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != self.nodes.shape:
            raise QuadratureError("Volume weights and nodes are misaligned.")
        if np.any(weights <= 0):
            raise QuadratureError("Volume weights must be positive.")
        object.__setattr__(self, "weights", weights)

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)

    def to_document(self) -> dict[str, Any]:
        return _rule_document(self.nodes, self.weights)


@dataclass(frozen=True)
class SolvabilityResult:
    passed: bool
    gap: float
    interior: float
    boundary: float


def _rule_document(nodes: HPoint, weights: np.ndarray) -> dict[str, Any]:
    flat = nodes.z.reshape(-1, nodes.n)
    return {
        "nodes": [
            [float(z.real), float(z.imag), float(t)]
            for z, t in zip(flat[:, 0], nodes.t.reshape(-1), strict=True)
        ],
        "weights": [float(w) for w in weights.reshape(-1)],
    }


def surface_from_document(data: dict[str, Any]) -> SurfaceQuadrature:
    raw = np.asarray(data["nodes"], dtype=float)
    nodes = HPoint((raw[:, 0] + 1j * raw[:, 1])[:, None], raw[:, 2])
    return SurfaceQuadrature(nodes=nodes, weights=np.asarray(data["weights"], dtype=float))


def _require_h1(n: int) -> None:
    if n != 1:
        raise QuadratureError(f"Quadrature rules are only available for n=1, got n={n}.")


def _angular_rule(
    n_phi: int, n_alpha: int, *, polar: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """φ nodes/weights (trapezoid) and α nodes/weights.

    With `polar` the α nodes are θ-midpoints (see the module docstring),
    otherwise mapped Gauss-Legendre nodes.
    """
    if n_phi < MIN_ANGULAR_NODES or n_alpha < MIN_ANGULAR_NODES:
        raise QuadratureError(
            f"Angular resolution ({n_phi}, {n_alpha}) is below the minimum "
            f"{MIN_ANGULAR_NODES} per direction."
        )
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    phi_weights = np.full(n_phi, 2 * np.pi / n_phi)
    if polar:
        theta = (np.arange(n_alpha) + 0.5) * (np.pi / n_alpha)
        alpha = -(np.pi / 2) * np.cos(theta)
        alpha_weights = (np.pi / 2) * np.sin(theta) * (np.pi / n_alpha)
        return phi, phi_weights, alpha, alpha_weights
    u, u_weights = leggauss(n_alpha)
    alpha = (np.pi / 2) * u * (3 - u**2) / 2
    alpha_weights = u_weights * (3 * np.pi / 4) * (1 - u**2)
    return phi, phi_weights, alpha, alpha_weights


def _gauge_field(n: int) -> ScalarField:
    return ScalarField(lambda z, t: gauge_norm(HPoint(z, t)), n=n, name="N")


def sphere_quadrature(n: int = 1, res: tuple[int, int] = (32, 32)) -> SurfaceQuadrature:
    """Tensor rule on ∂B for dσ = (1/4)‖∇₀N‖/‖∇N‖ ds.

    The gradient ratio is taken from stencils; ds is the Euclidean area
    element of the polar chart, sqrt(sin²α/4 + cos³α) dφ dα.
    """
    _require_h1(n)
    n_phi, n_alpha = res
    if n_phi % 2:
        raise QuadratureError(f"The sphere rule needs an even number of φ nodes, got {n_phi}.")
    phi, phi_w, alpha, alpha_w = _angular_rule(n_phi, n_alpha, polar=True)
    phi_grid, alpha_grid = np.meshgrid(phi, alpha, indexing="ij")
    nodes = polar_h1("to", (np.ones_like(phi_grid), phi_grid, alpha_grid))
    nodes = HPoint(nodes.z.reshape(-1, 1), nodes.t.reshape(-1))
    alpha_flat = alpha_grid.reshape(-1)

    gauge = _gauge_field(n)
    horizontal = np.linalg.norm(horizontal_gradient(gauge, nodes, WEIGHT_STENCIL), axis=-1)
    euclidean = np.linalg.norm(euclidean_gradient(gauge, nodes, WEIGHT_STENCIL), axis=-1)
    area_element = np.sqrt(np.sin(alpha_flat) ** 2 / 4 + np.cos(alpha_flat) ** 3)
    weights = 0.25 * horizontal / euclidean * area_element * np.outer(phi_w, alpha_w).reshape(-1)
    logger.debug("Sphere rule %s: %d nodes, area %.12f", res, len(weights), weights.sum())
    return SurfaceQuadrature(nodes=nodes, weights=weights, char_excluded=True, resolution=res)


def ball_quadrature(n: int = 1, res: tuple[int, int, int] = (12, 24, 24)) -> VolumeQuadrature:
    """Radial Gauss-Legendre × angular rule with dv = r³ dr dφ dα."""
    _require_h1(n)
    n_r, n_phi, n_alpha = res
    if n_r < MIN_RADIAL_NODES:
        raise QuadratureError(f"Radial resolution {n_r} is below {MIN_RADIAL_NODES}.")
    phi, phi_w, alpha, alpha_w = _angular_rule(n_phi, n_alpha)
    s, s_w = leggauss(n_r)
    r = (s + 1) / 2
    r_w = s_w / 2 * r**3
    r_grid, phi_grid, alpha_grid = np.meshgrid(r, phi, alpha, indexing="ij")
    nodes = polar_h1("to", (r_grid, phi_grid, alpha_grid))
    weights = (r_w[:, None, None] * phi_w[None, :, None] * alpha_w[None, None, :]).reshape(-1)
    nodes = HPoint(nodes.z.reshape(-1, 1), nodes.t.reshape(-1))
    return VolumeQuadrature(nodes=nodes, weights=weights, resolution=res)


def _exit_radius(
    eta: HPoint,
    directions: HPoint,
    *,
    allow_boundary: bool = False,
    scan: int = 64,
    steps: int = 60,
) -> np.ndarray:
    """Smallest r > 0 with N(η·δ_r ω) = 1, per direction ω."""
    base = float(gauge_norm(eta))
    if base > 1 + 1e-12 or (base >= 1 and not allow_boundary):
        raise QuadratureError(f"Ray quadrature centre has gauge norm {base:.6g}.")
    # N(η·δ_r ω) ≥ r − N(η), so every ray has left by r = 1 + N(η).
    upper = 1.0 + base + 1e-3
    grid = np.linspace(0.0, upper, scan + 1)[1:]
    outside = np.stack(
        [gauge_norm(group_mul(eta, dilate(directions, r))) >= 1 for r in grid], axis=0
    )
    if not np.all(outside.any(axis=0)):
        raise QuadratureError("A ray failed to leave the ball within the scan range.")
    first = np.argmax(outside, axis=0)
    hi = grid[first]
    lo = np.where(first > 0, grid[np.maximum(first - 1, 0)], 0.0)
    for _ in range(steps):
        mid = (lo + hi) / 2
        stretched = HPoint(directions.z * mid[..., None], directions.t * mid**2)
        out = gauge_norm(group_mul(eta, stretched)) >= 1
        hi = np.where(out, mid, hi)
        lo = np.where(out, lo, mid)
    return (lo + hi) / 2


def ray_quadrature(
    eta: HPoint, res: tuple[int, int, int] = (12, 24, 24), *, allow_boundary: bool = False
) -> VolumeQuadrature:
    """Ball rule in dilation rays ζ = η·δ_r ω centred at an interior η.

    Left translation preserves dv, so dv = r³ dr dφ dα again; the r³ factor
    absorbs the N^{−2} singularity of the fundamental solution at η, and of
    its N^{−3} flux as well. With `allow_boundary` the centre may sit on ∂B;
    rays pointing out of the ball then get a vanishing radius.
    """
    _require_h1(eta.n)
    n_r, n_phi, n_alpha = res
    if n_r < MIN_RADIAL_NODES:
        raise QuadratureError(f"Radial resolution {n_r} is below {MIN_RADIAL_NODES}.")
    phi, phi_w, alpha, alpha_w = _angular_rule(n_phi, n_alpha)
    phi_grid, alpha_grid = np.meshgrid(phi, alpha, indexing="ij")
    directions = HPoint(
        (np.sqrt(np.cos(alpha_grid)) * np.exp(1j * phi_grid)).reshape(-1, 1),
        np.sin(alpha_grid).reshape(-1),
    )
    angular_w = np.outer(phi_w, alpha_w).reshape(-1)
    radius = _exit_radius(eta, directions, allow_boundary=allow_boundary)
    # Rays that leave at once carry no volume.
    keep = radius > MIN_RAY_RADIUS
    if not np.any(keep):
        raise QuadratureError("Every ray leaves the ball immediately.")
    directions, angular_w, radius = directions[keep], angular_w[keep], radius[keep]

    s, s_w = leggauss(n_r)
    fraction = (s + 1) / 2
    r = radius[None, :] * fraction[:, None]
    weights = (s_w / 2)[:, None] * radius[None, :] * r**3 * angular_w[None, :]
    offsets = HPoint(
        directions.z[None, :, :] * r[..., None], np.broadcast_to(directions.t, r.shape) * r**2
    )
    eta_b = HPoint(np.broadcast_to(eta.z, offsets.z.shape), np.broadcast_to(eta.t, r.shape))
    nodes = group_mul(eta_b, offsets)
    return VolumeQuadrature(
        nodes=HPoint(nodes.z.reshape(-1, 1), nodes.t.reshape(-1)),
        weights=weights.reshape(-1),
        resolution=res,
    )


def integrate_surface(sq: SurfaceQuadrature, values: np.ndarray) -> np.ndarray:
    """Σ w_i values[..., i]; numpy's pairwise summation keeps it run-to-run identical."""
    values = np.asarray(values)
    if values.shape[-1] != len(sq):
        raise QuadratureError(f"{values.shape[-1]} values for {len(sq)} surface nodes.")
    return np.sum(values * sq.weights, axis=-1)


def integrate_volume(vq: VolumeQuadrature, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[-1] != len(vq):
        raise QuadratureError(f"{values.shape[-1]} values for {len(vq)} volume nodes.")
    return np.sum(values * vq.weights, axis=-1)


def _check_fields(sq: SurfaceQuadrature, *fields: ScalarField) -> None:
    for f in fields:
        if f.n != sq.nodes.n:
            raise DimensionMismatchError(sq.nodes.n, f.n)


def greens_identity_residual(
    u: ScalarField,
    v: ScalarField,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    s: StencilParams = WEIGHT_STENCIL,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> float:
    """|∫_B(uL₀v − vL₀u)dv − ∫_{∂B}(u∂⊥v − v∂⊥u)dσ|."""
    _check_fields(sq, u, v)
    vn, sn = vq.nodes, sq.nodes
    volume = integrate_volume(
        vq, u(vn) * sublaplacian_L0(v, vn, s) - v(vn) * sublaplacian_L0(u, vn, s)
    )
    du = horizontal_normal_derivative(u, sn, s, char_threshold=char_threshold)
    dv = horizontal_normal_derivative(v, sn, s, char_threshold=char_threshold)
    surface = integrate_surface(sq, u(sn) * dv - v(sn) * du)
    return float(np.abs(volume - surface))


def first_identity_residual(
    u: ScalarField,
    v: ScalarField,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    s: StencilParams = WEIGHT_STENCIL,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> float:
    """|∫_{∂B} v∂⊥u dσ − ∫_B (vL₀u + (1/4)∇₀v·∇₀u) dv|."""
    _check_fields(sq, u, v)
    vn = vq.nodes
    gradient_term = np.sum(horizontal_gradient(v, vn, s) * horizontal_gradient(u, vn, s), axis=-1)
    volume = integrate_volume(vq, v(vn) * sublaplacian_L0(u, vn, s) + 0.25 * gradient_term)
    du = horizontal_normal_derivative(u, sq.nodes, s, char_threshold=char_threshold)
    surface = integrate_surface(sq, v(sq.nodes) * du)
    return float(np.abs(surface - volume))


def solvability_check(
    f: ScalarField,
    g: ScalarField,
    sq: SurfaceQuadrature,
    vq: VolumeQuadrature,
    tol: float = 1e-3,
) -> SolvabilityResult:
    """Gap |∫_B f dv − ∫_{∂B} g dσ|; passes below tol relative to the larger side or 1."""
    _check_fields(sq, f, g)
    interior = float(np.real(integrate_volume(vq, f(vq.nodes))))
    boundary = float(np.real(integrate_surface(sq, g(sq.nodes))))
    gap = abs(interior - boundary)
    scale = max(1.0, abs(interior), abs(boundary))
    return SolvabilityResult(
        passed=gap <= tol * scale, gap=gap, interior=interior, boundary=boundary
    )
