"""Fundamental solution, its circular average and the circular Neumann kernel.

The series displays use the circular Heisenberg harmonics
C_m^{(n/2+k, n/2+k)}(t + i|z|²) Y_k(z), evaluated on the "growing" side at
the pole and on the Kelvin-transformed "decaying" side at the field point.
They are available on H_1 only: for n ≥ 2 the circular average of g depends
on z·z̄′ through a zonal sum over all components, which a single product of
circular representatives does not reproduce.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ellipe, ellipkm1, gamma
from scipy.special import hyp2f1 as scipy_hyp2f1

from koranyi.heisenberg import (
    DimensionMismatchError,
    HPoint,
    PoleError,
    ScalarField,
    gauge_norm,
    group_mul,
    horizontal_normal_coefficients,
    inverse,
    outer_pairs,
)
from koranyi.quadrature import SurfaceQuadrature, integrate_surface
from koranyi.special import (
    CabIndex,
    HarmonicIndex,
    cab_poly,
    has_circular_harmonic,
    hyp2f1,
    pochhammer,
    spherical_harmonic,
)

logger = logging.getLogger(__name__)

# Gauge distance below which a point counts as the pole itself.
POLE_EPSILON = 1e-8
DEFAULT_CONDITION_LIMIT = 1e10
DEFAULT_MERIDIAN_NODES = 32
MIN_MERIDIAN_NODES = 8
POLE_RADII = 4
POLE_DIRECTIONS = 6
# Below this parameter the derivative of F(1/2, 1/2; 1; x) is summed directly.
ELLIPTIC_SWITCH = 0.5


class FitError(RuntimeError):
    def __init__(self, message: str, condition: float) -> None:
        super().__init__(message)
        self.condition = condition


class RegimeError(ValueError):
    """Raised when a truncated series is evaluated outside its convergence regime."""


class SeriesDimensionError(ValueError):
    """Raised when the circular series or the Neumann kernel is requested for n ≥ 2."""

    def __init__(self, n: int) -> None:
        super().__init__(f"The circular kernel series is implemented for n=1 only, got n={n}.")
        self.n = n


def _require_series_dimension(n: int) -> None:
    if n != 1:
        raise SeriesDimensionError(n)


@dataclass(frozen=True)
class KernelPair:
    """Pole η with the derived quantities C(η,ξ), P(η,ξ) of a field point ξ."""

    eta: HPoint
    n: int

    def c_and_p(self, xi: HPoint) -> tuple[np.ndarray, np.ndarray]:
        if xi.n != self.n:
            raise DimensionMismatchError(self.n, xi.n)
        c = xi.modulus_squared() + self.eta.modulus_squared() + 1j * (xi.t - self.eta.t)
        p = 2.0 * np.sum(xi.z * np.conj(self.eta.z), axis=-1)
        return c, p


@dataclass(frozen=True)
class SeriesValue:
    value: np.ndarray
    tail: np.ndarray


@dataclass(frozen=True)
class KernelCoefficients:
    n: int
    M: int
    K: int
    a: np.ndarray
    b0: float = 0.0
    residual: float = field(default=float("nan"))
    # Fitted with the pole fixed at e; only valid for kernels centred there.
    pinned: bool = False

    def __post_init__(self) -> None:
        table = np.asarray(self.a, dtype=complex)
        if table.shape != (self.M + 1, self.K + 1):
            raise ValueError(
                f"Coefficient table shape {table.shape} does not match M={self.M}, K={self.K}."
            )
        if not np.all(np.isfinite(table)):
            raise ValueError("Coefficient table contains non-finite entries.")
        object.__setattr__(self, "a", table)

    def retained(self) -> Iterator[tuple[int, int]]:
        for m in range(self.M + 1):
            for k in range(self.K + 1):
                if has_circular_harmonic(k, self.n):
                    yield m, k

    def to_document(self) -> dict[str, Any]:
        entries = [
            [m, k, float(self.a[m, k].real), float(self.a[m, k].imag)]
            for m in range(self.M + 1)
            for k in range(self.K + 1)
        ]
        return {
            "n": self.n,
            "M": self.M,
            "K": self.K,
            "b0": float(self.b0),
            "a": entries,
            "residual": float(self.residual),
            "pinned": self.pinned,
        }

    @classmethod
    def from_document(cls, data: dict[str, Any]) -> KernelCoefficients:
        m_max, k_max = int(data["M"]), int(data["K"])
        table = np.zeros((m_max + 1, k_max + 1), dtype=complex)
        for m, k, re, im in data["a"]:
            table[int(m), int(k)] = complex(re, im)
        return cls(
            n=int(data["n"]),
            M=m_max,
            K=k_max,
            a=table,
            b0=float(data.get("b0", 0.0)),
            residual=float(data.get("residual", float("nan"))),
            pinned=bool(data.get("pinned", False)),
        )


def a0_constant(n: int) -> float:
    """a_0 = 2^{n−2} Γ(n/2)² / π^{n+1}."""
    if n < 1:
        raise ValueError(f"Dimension must be at least 1, got n={n}.")
    return float(2.0 ** (n - 2) * gamma(n / 2) ** 2 / np.pi ** (n + 1))


def closed_form_coefficient(n: int, m: int) -> float:
    """a_{m;0} = a_0 m!/(n)_m, read off the expansion on the t-axis."""
    return a0_constant(n) * math.factorial(m) / float(pochhammer(float(n), m))


def fundamental_solution(eta: HPoint, xi: HPoint) -> np.ndarray:
    """g_η(ξ) = a_0 N(η^{−1}ξ)^{−2n}."""
    if eta.n != xi.n:
        raise DimensionMismatchError(eta.n, xi.n)
    distance = gauge_norm(group_mul(inverse(eta), xi))
    if np.any(distance < POLE_EPSILON):
        raise PoleError("Fundamental solution evaluated at its pole.")
    return a0_constant(xi.n) * distance ** (-2 * xi.n)


def fundamental_field(eta: HPoint) -> ScalarField:
    def g(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        return fundamental_solution(eta, HPoint(z, t))

    return ScalarField(g, n=eta.n, circular=False, name="g_eta")


def fundamental_flux(
    pole: HPoint,
    point: HPoint,
    char_threshold: float = 1e-6,
    direction: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """∂⊥ of ξ ↦ g_pole(ξ) at ξ = point, in closed form.

    Uses left invariance: ∇₀g_pole(ξ) = (∇₀g_e)(pole^{−1}ξ), with
    X_jΦ = 4(|w|²u_j + s v_j), Y_jΦ = 4(|w|²v_j − s u_j) for Φ = N⁴ at [w, s].
    A fixed `direction` (a_j, b_j) replaces the horizontal normal at `point`.
    """
    n = point.n
    relative = group_mul(inverse(pole), point)
    w, s = relative.z, relative.t
    modulus2 = relative.modulus_squared()
    phi = modulus2**2 + s**2
    if np.any(phi < POLE_EPSILON**4):
        raise PoleError("Flux kernel evaluated at its pole.")
    scale = a0_constant(n) * (-n / 2) * phi ** (-n / 2 - 1) * 4.0
    x_phi = modulus2[..., None] * w.real + s[..., None] * w.imag
    y_phi = modulus2[..., None] * w.imag - s[..., None] * w.real
    if direction is None:
        a, b = horizontal_normal_coefficients(point, char_threshold)
    else:
        a, b = direction
    return scale * np.sum(a * x_phi + b * y_phi, axis=-1)


def averaged_fundamental(eta: HPoint, xi: HPoint) -> np.ndarray:
    """ḡ_η(ξ) = a_0 |C|^{−n} F(n/2, n/2; n; |P|²/|C|²)."""
    n = xi.n
    c, p = KernelPair(eta, n).c_and_p(xi)
    c_abs = np.abs(c)
    # |C| scales like N², so the pole test uses the squared threshold.
    if np.any(c_abs < POLE_EPSILON**2):
        raise PoleError("Averaged fundamental solution evaluated at its pole.")
    ratio = np.abs(p) ** 2 / c_abs**2
    if np.any(ratio >= 1):
        raise PoleError("Field point lies on the circular orbit of the pole.")
    series = hyp2f1(n / 2, n / 2, n, ratio).require()
    return a0_constant(n) * c_abs ** (-n) * np.real(series)


def averaged_fundamental_variation(
    q: np.ndarray,
    t: np.ndarray,
    q_pole: np.ndarray,
    t_pole: np.ndarray,
    d_c: np.ndarray,
    d_p2: np.ndarray,
) -> np.ndarray:
    """First variation of ḡ on H_1 in its profile variables.

    ḡ = a_0|C|^{−1}F(x) with C = q + q′ + i(t − t′), x = |P|²/|C|², |P|² = 4qq′
    and F(x) = (2/π)K(x). `d_c` and `d_p2` are the variations of C and |P|²
    along the direction of interest; the result is the matching variation of ḡ.
    """
    c = q + q_pole + 1j * (t - t_pole)
    c_abs2 = np.abs(c) ** 2
    # 1 − x = ((q − q′)² + (t − t′)²)/|C|², kept exact near the orbit.
    gap = ((q - q_pole) ** 2 + (t - t_pole) ** 2) / c_abs2
    if np.any(gap <= 0):
        raise PoleError("Profile lies on the circular orbit of the pole.")
    x = 1.0 - gap
    k = ellipkm1(gap)
    f = 2.0 / np.pi * k
    near = x < ELLIPTIC_SWITCH
    safe_x = np.where(near, ELLIPTIC_SWITCH, x)
    derivative = np.where(
        near,
        0.25 * scipy_hyp2f1(1.5, 1.5, 2.0, np.where(near, x, 0.0)),
        (ellipe(safe_x) - gap * k) / (np.pi * safe_x * gap),
    )
    stretch = np.real(np.conj(c) * d_c) / c_abs2
    d_x = d_p2 / c_abs2 - 2.0 * x * stretch
    return a0_constant(1) * c_abs2 ** (-0.5) * (-stretch * f + derivative * d_x)


def _harmonic(m: int, k: int, n: int, point: HPoint) -> np.ndarray:
    """C_m^{(n/2+k, n/2+k)}(t + i|z|²) Y_k(z), homogeneous of degree 2(m+k)."""
    sigma = point.t + 1j * point.modulus_squared()
    alpha = n / 2 + k
    zonal = cab_poly(CabIndex(m, alpha, alpha), sigma)
    return np.real(zonal * spherical_harmonic(HarmonicIndex(k, k, n), point.z, circular=True))


def _decaying(m: int, k: int, n: int, point: HPoint) -> np.ndarray:
    sigma_abs2 = point.t**2 + point.modulus_squared() ** 2
    return sigma_abs2 ** (-n / 2 - m - k) * _harmonic(m, k, n, point)


def _series_tail(last_terms: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.abs(last_terms) * q / np.maximum(1.0 - q, 1e-300)


def series_averaged_fundamental(
    coeffs: KernelCoefficients, eta: HPoint, xi: HPoint
) -> SeriesValue:
    """Truncated Σ a_{m;k} decaying(ξ) growing(η), valid for N(η) < N(ξ)."""
    _require_series_dimension(coeffs.n)
    q = (gauge_norm(eta) / gauge_norm(xi)) ** 2
    if np.any(q >= 1):
        raise RegimeError("Series for the averaged kernel needs N(eta) < N(xi).")
    total = np.zeros(np.broadcast_shapes(eta.shape, xi.shape))
    last = np.zeros_like(total)
    for m, k in coeffs.retained():
        term = coeffs.a[m, k].real * _decaying(m, k, coeffs.n, xi) * _harmonic(
            m, k, coeffs.n, eta
        )
        total = total + term
        if m == coeffs.M:
            last = last + term
    return SeriesValue(total, _series_tail(last, q))


def series_kelvin(coeffs: KernelCoefficients, eta: HPoint, xi: HPoint) -> SeriesValue:
    """Truncated Kelvin series Σ a_{m;k} growing(ξ) growing(η), valid for N(η)N(ξ) < 1."""
    _require_series_dimension(coeffs.n)
    q = (gauge_norm(eta) * gauge_norm(xi)) ** 2
    if np.any(q >= 1):
        raise RegimeError("Kelvin series needs N(eta) N(xi) < 1.")
    total = np.zeros(np.broadcast_shapes(eta.shape, xi.shape))
    last = np.zeros_like(total)
    for m, k in coeffs.retained():
        term = coeffs.a[m, k].real * _harmonic(m, k, coeffs.n, xi) * _harmonic(
            m, k, coeffs.n, eta
        )
        total = total + term
        if m == coeffs.M:
            last = last + term
    return SeriesValue(total, _series_tail(last, q))


def correction_coefficients(coeffs: KernelCoefficients, eta: HPoint) -> np.ndarray:
    """b_{m;k}(η) = n/(m+k) · a_{m;k} C_m(t′+i|z′|²) Ȳ_k(z′); zero at (0, 0)."""
    _require_series_dimension(coeffs.n)
    table = np.zeros((coeffs.M + 1, coeffs.K + 1) + eta.shape)
    for m, k in coeffs.retained():
        if m + k == 0:
            continue
        table[m, k] = (
            coeffs.n / (m + k) * coeffs.a[m, k].real * _harmonic(m, k, coeffs.n, eta)
        )
    return table


def harmonic_correction(
    coeffs: KernelCoefficients, eta: HPoint, xi: HPoint, b0: float | None = None
) -> np.ndarray:
    """h(η, ξ) = b_0 + Σ_{(m,k)≠(0,0)} b_{m;k}(η) C_m(ς) Y_k(z).

    Each term has degree 2(m+k) in ξ, so on ∂B its horizontal normal
    derivative is 2(m+k)|z| times itself and cancels the matching terms of
    ∂⊥(ḡ + Kḡ) = −2n|z| Σ a_{m;k}(...).
    """
    b = correction_coefficients(coeffs, eta)
    total = np.full(np.broadcast_shapes(eta.shape, xi.shape), coeffs.b0 if b0 is None else b0)
    for m, k in coeffs.retained():
        if m + k == 0:
            continue
        total = total + b[m, k] * _harmonic(m, k, coeffs.n, xi)
    return total


def neumann_kernel(
    coeffs: KernelCoefficients, eta: HPoint, xi: HPoint, b0: float | None = None
) -> np.ndarray:
    """N_B(η, ξ) = ḡ_η(ξ) (closed form) + Kelvin series + harmonic correction."""
    _require_series_dimension(coeffs.n)
    if np.any(gauge_norm(group_mul(inverse(eta), xi)) < POLE_EPSILON):
        raise PoleError("Neumann kernel evaluated at its pole.")
    return (
        averaged_fundamental(eta, xi)
        + series_kelvin(coeffs, eta, xi).value
        + harmonic_correction(coeffs, eta, xi, b0)
    )


def regular_part(
    coeffs: KernelCoefficients, eta: HPoint, xi: HPoint, b0: float | None = None
) -> np.ndarray:
    """N_B − ḡ, the part of the Neumann kernel that is L_0-harmonic in ξ."""
    return series_kelvin(coeffs, eta, xi).value + harmonic_correction(coeffs, eta, xi, b0)


def neumann_kernel_field(
    coeffs: KernelCoefficients, eta: HPoint, b0: float | None = None
) -> ScalarField:
    def kernel(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        return neumann_kernel(coeffs, eta, HPoint(z, t), b0)

    return ScalarField(kernel, n=coeffs.n, circular=True, name="N_B")


def boundary_normalization(
    coeffs: KernelCoefficients, eta: HPoint, sq: SurfaceQuadrature
) -> float:
    """The b_0 for which ∫_{∂B} N_B(η, ξ) dσ(ξ) = 0."""
    values = neumann_kernel(coeffs, eta, sq.nodes, b0=0.0)
    return -float(integrate_surface(sq, values)) / sq.area


def _sample_directions(
    n: int, count: int, rng: np.random.Generator, sq: SurfaceQuadrature | None
) -> HPoint:
    if sq is not None:
        if sq.nodes.n != n:
            raise DimensionMismatchError(n, sq.nodes.n)
        picks = rng.choice(len(sq.nodes), size=count)
        return sq.nodes[picks]
    z = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    t = rng.normal(size=count)
    raw = HPoint(z, t)
    norm = gauge_norm(raw)
    return HPoint(raw.z / norm[:, None], raw.t / norm**2)


def _sample_pairs(
    n: int,
    count: int,
    ratio: float,
    rng: np.random.Generator,
    sq: SurfaceQuadrature | None,
) -> tuple[HPoint, HPoint]:
    outer = rng.uniform(0.5, 2.0, size=count)
    inner = outer * rng.uniform(0.02, ratio, size=count)
    xi_dir = _sample_directions(n, count, rng, sq)
    eta_dir = _sample_directions(n, count, rng, sq)
    xi = HPoint(xi_dir.z * outer[:, None], xi_dir.t * outer**2)
    eta = HPoint(eta_dir.z * inner[:, None], eta_dir.t * inner**2)
    return eta, xi


def _meridian_rule(count: int) -> tuple[HPoint, np.ndarray]:
    """Gauss-Legendre nodes in α on the meridian φ = 0 of ∂B, weighted for |z|dσ.

    A circular integrand reduces to ∫_{∂B} F|z| dσ = (π/2)∫ F cos α dα.
    """
    u, u_weights = leggauss(count)
    alpha = (np.pi / 2) * u
    nodes = HPoint((np.sqrt(np.cos(alpha)) + 0j)[:, None], np.sin(alpha))
    weights = (np.pi / 2) ** 2 * u_weights * np.cos(alpha)
    return nodes, weights


def _pole_grid(ratio: float) -> HPoint:
    """Poles at gauge radii in [ratio/2, ratio] along a spread of meridian directions."""
    radii = np.linspace(ratio / 2, ratio, POLE_RADII)
    u, _ = leggauss(POLE_DIRECTIONS)
    alpha = (np.pi / 2) * u
    r, a = np.meshgrid(radii, alpha, indexing="ij")
    z = r * np.sqrt(np.cos(a))
    return HPoint((z.reshape(-1) + 0j)[:, None], (r**2 * np.sin(a)).reshape(-1))


def _meridian_count(sq: SurfaceQuadrature | None) -> int:
    if sq is None or sq.resolution[1] < MIN_MERIDIAN_NODES:
        return DEFAULT_MERIDIAN_NODES
    return int(sq.resolution[1])


def project_coefficients(
    n: int,
    M: int,
    K: int,
    *,
    sq: SurfaceQuadrature | None = None,
    pairs: int = 600,
    ratio: float = 0.5,
    seed: int = 0,
    eta: HPoint | None = None,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> KernelCoefficients:
    """Fit a_{m;k} by weighted least squares against the closed-form averaged kernel.

    On ∂B the decaying harmonics coincide with the growing ones, so
    ḡ_η(ξ) = Σ a_m H_m(ξ)H_m(η) there; harmonics of different degree are
    orthogonal for |z|dσ. The design pairs meridian nodes ξ of the sphere
    (as many as the rule has α nodes) with a grid of poles η, N(η) ≤ ratio,
    and each row carries the square root of the |z|dσ weight of its ξ. The
    normal equations are then diagonal and the fit reproduces the expansion
    coefficients independently of the resolution.

    `pairs` random series-regime pairs, with directions from `sq` when it is
    given, are held out; the maximum relative error of the truncated series
    there is stored as `residual`. Passing `eta` pins the pole (e.g. at the
    identity), in which case harmonics vanishing at η stay zero.
    """
    _require_series_dimension(n)
    if not 0 < ratio < 1:
        raise ValueError(f"Fit ratio must lie in (0, 1), got {ratio}.")
    xi, xi_weights = _meridian_rule(_meridian_count(sq))
    poles = _pole_grid(ratio) if eta is None else HPoint(np.atleast_2d(eta.z), np.atleast_1d(eta.t))
    pole_b, xi_b = outer_pairs(poles, xi)
    root = np.sqrt(xi_weights)[None, :]
    target = (averaged_fundamental(pole_b, xi_b) * root).reshape(-1)

    template = KernelCoefficients(n=n, M=M, K=K, a=np.zeros((M + 1, K + 1)))
    indices = list(template.retained())
    design = np.stack(
        [
            (_harmonic(m, k, n, pole_b) * _harmonic(m, k, n, xi_b) * root).reshape(-1)
            for m, k in indices
        ],
        axis=-1,
    )
    column_scale = np.linalg.norm(design, axis=0)
    # Columns that vanish on the grid (e.g. m ≥ 1 with the pole pinned at e) stay zero.
    active = column_scale > np.finfo(float).tiny
    scaled = design[:, active] / column_scale[active]
    condition = float(np.linalg.cond(scaled))
    logger.debug("Coefficient fit n=%d M=%d K=%d condition=%.3e", n, M, K, condition)
    if not np.isfinite(condition) or condition > condition_limit:
        raise FitError(
            f"Coefficient fit is ill-conditioned (condition {condition:.2e}).", condition
        )
    solution, *_ = np.linalg.lstsq(scaled, target, rcond=None)
    fitted = np.zeros(len(indices))
    fitted[active] = solution / column_scale[active]

    table = np.zeros((M + 1, K + 1), dtype=complex)
    for (m, k), value in zip(indices, fitted, strict=True):
        table[m, k] = value
    coeffs = KernelCoefficients(n=n, M=M, K=K, a=table, pinned=eta is not None)

    rng = np.random.default_rng(seed)
    eta_held, xi_held = _sample_pairs(n, pairs, ratio, rng, sq)
    if eta is not None:
        eta_held = HPoint(
            np.broadcast_to(eta.z, xi_held.z.shape), np.broadcast_to(eta.t, xi_held.shape)
        )
    prediction = series_averaged_fundamental(coeffs, eta_held, xi_held).value
    held = averaged_fundamental(eta_held, xi_held)
    residual = float(np.max(np.abs(prediction / held - 1.0)))
    logger.info("Fitted %d kernel coefficients, held-out residual %.3e", len(indices), residual)
    return replace(coeffs, residual=residual)


def normalized_coefficients(
    n: int,
    M: int,
    K: int,
    eta: HPoint,
    sq: SurfaceQuadrature | None = None,
    *,
    pairs: int = 600,
    ratio: float = 0.5,
    seed: int = 0,
    pin: bool = False,
) -> KernelCoefficients:
    """`project_coefficients` followed by the b_0 that centres N_B(η, ·) on the sphere.

    With `pin` the fit itself is carried out with the pole fixed at η.
    """
    coeffs = project_coefficients(
        n, M, K, sq=sq, pairs=pairs, ratio=ratio, seed=seed, eta=eta if pin else None
    )
    if sq is None:
        return coeffs
    return replace(coeffs, b0=boundary_normalization(coeffs, eta, sq))
