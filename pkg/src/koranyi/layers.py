"""Single and double layer potentials on the Korányi sphere and the Nyström operators.

K and K′ are twice the principal-value boundary operators, so K applied to a
constant gives minus that constant and the Neumann integral equation reads
(I + K′)ψ = g; its solution enters the Neumann solution as the single layer
of 2ψ.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import svd

from koranyi.heisenberg import (
    DEFAULT_CHAR_THRESHOLD,
    DimensionMismatchError,
    HPoint,
    gauge_norm,
    group_mul,
    horizontal_normal_coefficients,
    inverse,
    outer_pairs,
    shift_along_normal,
)
from koranyi.kernels import (
    averaged_fundamental_variation,
    fundamental_flux,
    fundamental_solution,
)
from koranyi.quadrature import SurfaceQuadrature, integrate_surface

logger = logging.getLogger(__name__)

MAX_WORKERS = 4
ROW_BLOCK = 128
DEFAULT_H_SEQUENCE = tuple(0.05 * 2.0**-k for k in range(5))
PROFILE_ORDER = 16
PROFILE_FINEST = 1e-6
# Singular values below this fraction of the largest are treated as null directions.
NULL_CUTOFF = 1e-3

DiagRule = Literal["punctured", "corrected"]


class CompatibilityError(ValueError):
    """Raised when boundary data violate the solvability condition; keeps the gap."""

    def __init__(self, gap: float, tol: float) -> None:
        super().__init__(f"Compatibility gap {gap:.6g} exceeds tolerance {tol:.3g}.")
        self.gap = gap
        self.tol = tol


@dataclass(frozen=True)
class DensityVector:
    values: np.ndarray
    quad: SurfaceQuadrature = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape != (len(self.quad),):
            raise ValueError(
                f"Density has {values.shape} samples for {len(self.quad)} quadrature nodes."
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, quad: SurfaceQuadrature, func) -> DensityVector:
        """Sample a ScalarField (or any callable on HPoint) at the quadrature nodes."""
        return cls(np.asarray(func(quad.nodes)), quad)

    def to_document(self) -> dict[str, Any]:
        return {
            "re": [float(v) for v in np.real(self.values)],
            "im": [float(v) for v in np.imag(self.values)],
        }


@dataclass(frozen=True)
class NystromSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    diag_rule: DiagRule

    def __post_init__(self) -> None:
        rows, cols = np.shape(self.matrix)
        if rows != cols or np.shape(self.rhs) != (rows,):
            raise ValueError("Nyström matrix must be square and aligned with its right-hand side.")


@dataclass(frozen=True)
class SolveReport:
    residual: float
    null_gap: float
    compat_gap: float

    def to_document(self) -> dict[str, float]:
        return {
            "residual": self.residual,
            "null_gap": self.null_gap,
            "compat_gap": self.compat_gap,
        }


@dataclass(frozen=True)
class JumpLimits:
    inner: complex
    outer: complex
    converged: bool
    inner_normal: complex
    outer_normal: complex
    single_inner_normal: complex
    single_outer_normal: complex

    @property
    def jump(self) -> complex:
        """v₊ − v₋ of the double layer."""
        return self.outer - self.inner

    @property
    def normal_jump(self) -> complex:
        return self.outer_normal - self.inner_normal

    @property
    def single_normal_jump(self) -> complex:
        return self.single_outer_normal - self.single_inner_normal


def _flux_rows(nodes: HPoint, rows: range, char_threshold: float) -> np.ndarray:
    """D[a, b] = ∂⊥ at node b of g with pole at node a, zero on the diagonal."""
    poles = nodes[rows.start : rows.stop]
    pole_b, point_b = outer_pairs(poles, nodes)
    diagonal = np.zeros(pole_b.shape, dtype=bool)
    diagonal[np.arange(len(rows)), np.arange(rows.start, rows.stop)] = True
    # Any pole off the sphere will do on the diagonal; the entry is discarded.
    safe = HPoint(np.where(diagonal[..., None], 0.0, pole_b.z), np.where(diagonal, 0.0, pole_b.t))
    block = fundamental_flux(safe, point_b, char_threshold)
    return np.where(diagonal, 0.0, block)


def flux_matrix(
    sq: SurfaceQuadrature, char_threshold: float = DEFAULT_CHAR_THRESHOLD
) -> np.ndarray:
    size = len(sq)
    blocks = [range(start, min(start + ROW_BLOCK, size)) for start in range(0, size, ROW_BLOCK)]
    matrix = np.zeros((size, size))
    with ThreadPoolExecutor(max_workers=MAX_WORKERS) as executor:
        futures = {
            executor.submit(_flux_rows, sq.nodes, block, char_threshold): block for block in blocks
        }
        for future in as_completed(futures):
            block = futures[future]
            matrix[block.start : block.stop] = future.result()
    return matrix


def build_K(
    sq: SurfaceQuadrature,
    diag_rule: DiagRule = "corrected",
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> np.ndarray:
    """K_ij = 2 D[i, j] w_j; the corrected rule makes every row sum to −1."""
    matrix = 2.0 * flux_matrix(sq, char_threshold) * sq.weights[None, :]
    if diag_rule == "corrected":
        np.fill_diagonal(matrix, 0.0)
        np.fill_diagonal(matrix, -1.0 - matrix.sum(axis=1))
    elif diag_rule != "punctured":
        raise ValueError(f"Unknown diagonal rule {diag_rule!r}.")
    return matrix


def build_Kprime(
    sq: SurfaceQuadrature,
    diag_rule: DiagRule = "corrected",
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> np.ndarray:
    """K′_ij = 2 D[j, i] w_j; the corrected rule enforces Σ_i w_i K′_ij = −w_j."""
    w = sq.weights
    matrix = 2.0 * flux_matrix(sq, char_threshold).T * w[None, :]
    if diag_rule == "corrected":
        np.fill_diagonal(matrix, 0.0)
        column = w @ matrix
        np.fill_diagonal(matrix, (-w - column) / w)
    elif diag_rule != "punctured":
        raise ValueError(f"Unknown diagonal rule {diag_rule!r}.")
    return matrix


def _warn_near_surface(sq: SurfaceQuadrature, eta: HPoint) -> None:
    spacing = np.sqrt(sq.area / len(sq))
    pole_b, point_b = outer_pairs(eta, sq.nodes)
    distance = gauge_norm(group_mul(inverse(pole_b), point_b))
    closest = float(np.min(distance))
    if closest < spacing:
        logger.warning(
            "Layer potential evaluated %.3g from the surface (node spacing %.3g); "
            "accuracy is degraded.",
            closest,
            spacing,
        )


def single_layer(phi: DensityVector, eta: HPoint) -> np.ndarray:
    """m(η) = ∫_{∂B} φ(ξ) g_η(ξ) dσ(ξ)."""
    sq = phi.quad
    if eta.n != sq.nodes.n:
        raise DimensionMismatchError(sq.nodes.n, eta.n)
    _warn_near_surface(sq, eta)
    pole_b, point_b = outer_pairs(eta, sq.nodes)
    return integrate_surface(sq, phi.values * fundamental_solution(pole_b, point_b))


def double_layer(
    phi: DensityVector, eta: HPoint, char_threshold: float = DEFAULT_CHAR_THRESHOLD
) -> np.ndarray:
    """v(η) = ∫_{∂B} φ(ξ) ∂⊥g_η(ξ) dσ(ξ); −1 for φ = 1 and η inside."""
    sq = phi.quad
    if eta.n != sq.nodes.n:
        raise DimensionMismatchError(sq.nodes.n, eta.n)
    _warn_near_surface(sq, eta)
    pole_b, point_b = outer_pairs(eta, sq.nodes)
    return integrate_surface(sq, phi.values * fundamental_flux(pole_b, point_b, char_threshold))


def _profile_rule(anchor: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule in α on (−π/2, π/2), panels doubling away from anchor."""
    edges = [anchor]
    for end in (-np.pi / 2, np.pi / 2):
        step = PROFILE_FINEST
        while abs(end - anchor) > step:
            edges.append(anchor + np.sign(end - anchor) * step)
            step *= 2.0
        edges.append(end)
    bounds = np.unique(edges)
    u, w = leggauss(PROFILE_ORDER)
    half = np.diff(bounds) / 2
    centres = (bounds[:-1] + bounds[1:]) / 2
    nodes = centres[:, None] + half[:, None] * u[None, :]
    return nodes.reshape(-1), (half[:, None] * w[None, :]).reshape(-1)


def _profile(eta: HPoint, anchor: float) -> tuple[np.ndarray, ...]:
    alpha, weights = _profile_rule(anchor)
    return (
        np.cos(alpha),
        np.sin(alpha),
        float(eta.modulus_squared()),
        float(eta.t),
        alpha,
        weights,
    )


def constant_double_layer(eta: HPoint, anchor: float) -> float:
    """w(η) = ∫_{∂B} ∂⊥g_η dσ for H_1, refined toward the sphere angle `anchor`.

    Averaging over rotations turns ∂⊥g_η into ∂⊥ḡ_η = |z|·Rḡ_η with R the
    dilation generator, so w = (π/2)∫cos α Rḡ_η(α) dα along one meridian.
    """
    q, t, q_pole, t_pole, alpha, weights = _profile(eta, anchor)
    dilation = averaged_fundamental_variation(
        q, t, q_pole, t_pole, 2.0 * (q + 1j * t), 8.0 * q * q_pole
    )
    return float(np.pi / 2 * np.sum(weights * np.cos(alpha) * dilation))


def constant_single_layer_slope(
    eta: HPoint, velocity: tuple[float, float], anchor: float
) -> float:
    """d/ds of ∫_{∂B} g_η dσ while η moves with (dq′/ds, dt′/ds) = `velocity`."""
    q, t, q_pole, t_pole, alpha, weights = _profile(eta, anchor)
    dq, dt = velocity
    variation = averaged_fundamental_variation(q, t, q_pole, t_pole, dq - 1j * dt, 4.0 * q * dq)
    return float(np.pi / 2 * np.sum(weights * np.sqrt(np.cos(alpha)) * variation))


def _richardson(values: list[complex]) -> tuple[complex, float]:
    """Extrapolate h → 0 for h_k = h₀2^{−k} assuming an error expansion in powers of h."""
    table = [np.asarray(values, dtype=complex)]
    for level in range(1, len(values)):
        previous = table[-1]
        table.append(previous[1:] + (previous[1:] - previous[:-1]) / (2.0**level - 1.0))
    best = complex(table[-1][-1])
    spread = abs(best - complex(table[-2][-1])) if len(table) > 1 else np.inf
    return best, float(spread)


def jump_probe(
    phi: DensityVector,
    node_index: int,
    h_sequence: tuple[float, ...] = DEFAULT_H_SEQUENCE,
    *,
    rtol: float = 5e-2,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
) -> JumpLimits:
    """One-sided limits of the layer potentials at the quadrature node ζ = nodes[node_index].

    Both potentials are evaluated at η = ζ·exp(±h n₀) as
    ∫(φ − φ(ζ))·kernel dσ + φ(ζ)·(the potential of the constant density); the
    second term is reduced to a meridian integral and computed with a rule
    refined toward ζ. Values and normal derivatives are extrapolated over
    `h_sequence`. The double-layer normal derivative is a central difference
    along the normal segment; the single-layer one is differentiated in closed
    form with the direction frozen at ζ.
    """
    steps = np.asarray(h_sequence, dtype=float)
    if steps.size < 2 or np.any(np.diff(steps) >= 0):
        raise ValueError("h_sequence must hold at least two strictly decreasing steps.")
    sq = phi.quad
    anchor = sq.nodes[node_index]
    anchor_value = complex(phi.values[node_index])
    anchor_alpha = float(np.arctan2(anchor.t, anchor.modulus_squared()))
    offset_values = phi.values - anchor_value
    a, b = horizontal_normal_coefficients(anchor, char_threshold)
    length = float(np.sqrt(np.sum(a**2 + b**2)))
    direction = (a / length, b / length)
    velocity_z = complex((a[0] + 1j * b[0]) / length)
    z_anchor = complex(anchor.z[0])

    def double(offset: float) -> complex:
        probe = shift_along_normal(anchor, offset, char_threshold)
        pole_b, point_b = outer_pairs(probe, sq.nodes)
        flux = fundamental_flux(pole_b, point_b, char_threshold)
        regular = integrate_surface(sq, offset_values * flux)
        return complex(regular + anchor_value * constant_double_layer(probe, anchor_alpha))

    def single_slope(offset: float) -> complex:
        probe = shift_along_normal(anchor, offset, char_threshold)
        pole_b, point_b = outer_pairs(probe, sq.nodes)
        flux = fundamental_flux(point_b, pole_b, char_threshold, direction=direction)
        regular = integrate_surface(sq, offset_values * flux)
        z_probe = complex(probe.z[0])
        velocity = (
            2.0 * (z_probe * velocity_z.conjugate()).real,
            2.0 * (z_anchor * velocity_z.conjugate()).imag,
        )
        return complex(
            regular + anchor_value * constant_single_layer_slope(probe, velocity, anchor_alpha)
        )

    def slope(offset: float) -> complex:
        delta = abs(offset) / 4
        return (double(offset + delta) - double(offset - delta)) / (2 * delta)

    limits: dict[str, complex] = {}
    spreads: list[float] = []
    for side, sign in (("outer", 1.0), ("inner", -1.0)):
        offsets = [sign * h for h in h_sequence]
        limits[side], spread = _richardson([double(s) for s in offsets])
        spreads.append(spread / max(1.0, abs(limits[side])))
        limits[f"{side}_normal"], _ = _richardson([slope(s) for s in offsets])
        limits[f"single_{side}"], _ = _richardson([single_slope(s) for s in offsets])
    converged = max(spreads) <= rtol
    if not converged:
        logger.warning(
            "Jump extrapolation at node %d did not settle (spread %.3g).",
            node_index,
            max(spreads),
        )
    return JumpLimits(
        inner=limits["inner"],
        outer=limits["outer"],
        converged=converged,
        inner_normal=limits["inner_normal"],
        outer_normal=limits["outer_normal"],
        single_inner_normal=limits["single_inner"],
        single_outer_normal=limits["single_outer"],
    )


def singular_values(
    sq: SurfaceQuadrature,
    operator: Literal["K", "Kprime"] = "K",
    diag_rule: DiagRule = "corrected",
) -> np.ndarray:
    """Singular values of I + K (or I + K′) in ascending order."""
    matrix = build_K(sq, diag_rule) if operator == "K" else build_Kprime(sq, diag_rule)
    values = svd(np.eye(len(sq)) + matrix, compute_uv=False)
    return np.sort(values)


def assemble_neumann_system(
    g: DensityVector, diag_rule: DiagRule = "corrected"
) -> NystromSystem:
    sq = g.quad
    return NystromSystem(np.eye(len(sq)) + build_Kprime(sq, diag_rule), g.values, diag_rule)


def compatibility_gap(g: DensityVector) -> float:
    return float(abs(integrate_surface(g.quad, g.values)))


def solve_integral_equation(
    g: DensityVector,
    sq: SurfaceQuadrature | None = None,
    *,
    tol: float = 1e-3,
    diag_rule: DiagRule = "corrected",
    system: NystromSystem | None = None,
) -> tuple[DensityVector, SolveReport]:
    """Minimum-norm solution of (I + K′)ψ = g.

    The smallest singular triple is dropped: its left vector spans the
    complement of the range (the dσ-weights) and its right vector the
    one-dimensional null space. Any further triple below `NULL_CUTOFF` times
    the largest singular value is dropped as well, with a warning.
    """
    quad = sq or g.quad
    if quad is not g.quad:
        raise ValueError("Density and quadrature rule differ.")
    gap = compatibility_gap(g)
    scale = max(1.0, float(integrate_surface(quad, np.abs(g.values))))
    if gap > tol * scale:
        raise CompatibilityError(gap, tol * scale)

    system = system or assemble_neumann_system(g, diag_rule)
    left, sigma, right_h = svd(system.matrix)
    order = np.argsort(sigma)
    kept = order[1:][sigma[order[1:]] > NULL_CUTOFF * sigma[order[-1]]]
    if len(kept) < len(order) - 1:
        logger.warning(
            "Dropped %d near-null directions of I + K' besides the constant mode.",
            len(order) - 1 - len(kept),
        )
    coefficients = (left[:, kept].conj().T @ system.rhs) / sigma[kept]
    psi = right_h[kept].conj().T @ coefficients
    if np.isrealobj(system.rhs):
        psi = psi.real

    range_rhs = left[:, kept] @ (left[:, kept].conj().T @ system.rhs)
    residual = float(np.linalg.norm(system.matrix @ psi - range_rhs))
    null_gap = float(sigma[order[0]] / sigma[order[1]])
    logger.debug(
        "Neumann BIE: residual %.3e, null gap %.3e, compat gap %.3e", residual, null_gap, gap
    )
    report = SolveReport(residual=residual, null_gap=null_gap, compat_gap=gap)
    return DensityVector(psi, quad), report
