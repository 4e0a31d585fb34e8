from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np

# Points below this |z| (gauge units) are treated as characteristic on the Korányi sphere.
DEFAULT_CHAR_THRESHOLD = 1e-6

_FIRST_DERIVATIVE = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12)),
}
_SECOND_DERIVATIVE = {
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    4: ((-2, -1 / 12), (-1, 16 / 12), (0, -30 / 12), (1, 16 / 12), (2, -1 / 12)),
}


class DimensionMismatchError(ValueError):
    """Raised when two points or a point and a field live in different H_n."""

    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(f"Dimension mismatch: expected n={expected}, got n={actual}.")
        self.expected = expected
        self.actual = actual


class CharacteristicPointError(ValueError):
    """Raised when the horizontal normal is requested where |z| vanishes."""

    def __init__(self, modulus: float, threshold: float) -> None:
        super().__init__(
            f"Characteristic point: |z|={modulus:.3e} is below the threshold {threshold:.1e}."
        )
        self.modulus = modulus
        self.threshold = threshold


class PoleError(ValueError):
    """Raised when an operation is evaluated at its pole."""


@dataclass(frozen=True)
class HPoint:
    """A point, or a batch of points, [z, t] of H_n.

    `z` has shape (..., n) and `t` the matching batch shape (...). A single point
    has `z.shape == (n,)` and a scalar `t`.
    """

    z: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        t = np.asarray(self.t, dtype=float)
        if z.shape[:-1] != t.shape:
            t = np.broadcast_to(t, z.shape[:-1]).copy()
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(t))):
            raise ValueError("HPoint components must be finite.")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return int(self.z.shape[-1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.t.shape

    @property
    def x(self) -> np.ndarray:
        return self.z.real

    @property
    def y(self) -> np.ndarray:
        return self.z.imag

    def modulus_squared(self) -> np.ndarray:
        return np.sum(np.abs(self.z) ** 2, axis=-1)

    def __getitem__(self, index) -> HPoint:
        return HPoint(self.z[index], self.t[index])

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("A single HPoint has no length.")
        return self.shape[0]

    @classmethod
    def identity(cls, n: int) -> HPoint:
        return cls(np.zeros(n, dtype=complex), 0.0)

    @classmethod
    def stack(cls, points: list[HPoint]) -> HPoint:
        return cls(np.stack([p.z for p in points]), np.stack([p.t for p in points]))


@dataclass(frozen=True)
class ScalarField:
    """A vectorized function on H_n: `func(z, t)` with z of shape (..., n)."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n: int = 1
    circular: bool = False
    name: str = field(default="", compare=False)

    def __call__(self, point: HPoint) -> np.ndarray:
        if point.n != self.n:
            raise DimensionMismatchError(self.n, point.n)
        return np.asarray(self.func(point.z, point.t))

    def circularity_defect(self, point: HPoint, angles: int = 7) -> float:
        base = self(point)
        worst = 0.0
        for theta in np.linspace(0.0, 2 * np.pi, angles, endpoint=False)[1:]:
            rotated = HPoint(point.z * np.exp(1j * theta), point.t)
            worst = max(worst, float(np.max(np.abs(self(rotated) - base))))
        return worst


@dataclass(frozen=True)
class StencilParams:
    h: float = 1e-3
    order: int = 2

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError(f"Stencil step must be positive, got h={self.h}.")
        if self.order not in _FIRST_DERIVATIVE:
            raise ValueError(f"Stencil order must be 2 or 4, got {self.order}.")


class VectorField(Enum):
    X = "X"
    Y = "Y"
    T = "T"
    Z = "Z"
    ZBAR = "Zbar"


def _check_same_dimension(p: HPoint, q: HPoint) -> None:
    if p.n != q.n:
        raise DimensionMismatchError(p.n, q.n)


def group_mul(p: HPoint, q: HPoint) -> HPoint:
    """[z, t][z', t'] = [z + z', t + t' + 2 Im(z . conj(z'))]."""
    _check_same_dimension(p, q)
    twist = 2.0 * np.imag(np.sum(p.z * np.conj(q.z), axis=-1))
    return HPoint(p.z + q.z, p.t + q.t + twist)


def inverse(p: HPoint) -> HPoint:
    return HPoint(-p.z, -p.t)


def gauge_norm(p: HPoint) -> np.ndarray:
    return (p.modulus_squared() ** 2 + p.t**2) ** 0.25


def dilate(p: HPoint, lam: float) -> HPoint:
    return HPoint(lam * p.z, lam**2 * p.t)


def outer_pairs(poles: HPoint, points: HPoint) -> tuple[HPoint, HPoint]:
    """Broadcast two batches against each other, poles on the leading axes."""
    _check_same_dimension(poles, points)
    shape = poles.shape + points.shape
    spread = poles.shape + (1,) * len(points.shape)
    pole_b = HPoint(
        np.broadcast_to(poles.z.reshape(spread + (poles.n,)), shape + (poles.n,)),
        np.broadcast_to(poles.t.reshape(spread), shape),
    )
    point_b = HPoint(
        np.broadcast_to(points.z, shape + (points.n,)), np.broadcast_to(points.t, shape)
    )
    return pole_b, point_b


def left_translate(q: HPoint, f: ScalarField) -> ScalarField:
    """Return f∘L_q, i.e. p ↦ f(q·p)."""

    def translated(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        return f(group_mul(q, HPoint(z, t)))

    return ScalarField(translated, n=f.n, circular=False, name=f"{f.name}∘L")


def _flow_step(which: VectorField, j: int, n: int, s: float) -> HPoint:
    # exp(sV) for the one-parameter subgroup generated by V.
    z = np.zeros(n, dtype=complex)
    if which is VectorField.X:
        z[j] = s
        return HPoint(z, 0.0)
    if which is VectorField.Y:
        z[j] = 1j * s
        return HPoint(z, 0.0)
    if which is VectorField.T:
        return HPoint(z, s)
    raise ValueError(f"{which} has no real one-parameter flow.")


def _directional(
    f: ScalarField,
    p: HPoint,
    which: VectorField,
    j: int,
    s: StencilParams,
    *,
    second: bool = False,
) -> np.ndarray:
    table = _SECOND_DERIVATIVE if second else _FIRST_DERIVATIVE
    total: np.ndarray | complex = 0.0
    for offset, weight in table[s.order]:
        shifted = group_mul(p, _flow_step(which, j, p.n, offset * s.h))
        total = total + weight * f(shifted)
    return np.asarray(total) / (s.h**2 if second else s.h)


def apply_field(
    which: VectorField,
    f: ScalarField,
    p: HPoint,
    s: StencilParams,
    j: int = 0,
) -> np.ndarray:
    """Central-difference action of a left-invariant field on f at p.

    X_j, Y_j and T are differentiated along their exact group flows, so
    X_j f(p) = d/ds f(p·[s e_j, 0]) with no chain-rule terms to assemble.
    """
    if f.n != p.n:
        raise DimensionMismatchError(f.n, p.n)
    if not 0 <= j < p.n:
        raise IndexError(f"Field index j={j} outside 0..{p.n - 1}.")
    if which in (VectorField.X, VectorField.Y, VectorField.T):
        return _directional(f, p, which, j, s)
    x_part = _directional(f, p, VectorField.X, j, s)
    y_part = _directional(f, p, VectorField.Y, j, s)
    if which is VectorField.Z:
        return 0.5 * (x_part - 1j * y_part)
    return 0.5 * (x_part + 1j * y_part)


def derived_field(
    which: VectorField, f: ScalarField, s: StencilParams, j: int = 0
) -> ScalarField:
    """Wrap `apply_field` as a new field so operators can be nested."""

    def derivative(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        return apply_field(which, f, HPoint(z, t), s, j)

    return ScalarField(derivative, n=f.n, circular=False, name=f"{which.value}{j}({f.name})")


def commutator(
    first: VectorField,
    second: VectorField,
    f: ScalarField,
    p: HPoint,
    s: StencilParams,
    j: int = 0,
) -> np.ndarray:
    ab = apply_field(first, derived_field(second, f, s, j), p, s, j)
    ba = apply_field(second, derived_field(first, f, s, j), p, s, j)
    return ab - ba


def sublaplacian_L0(f: ScalarField, p: HPoint, s: StencilParams) -> np.ndarray:
    """(1/4) Σ_j (X_j² + Y_j²) f at p."""
    if f.n != p.n:
        raise DimensionMismatchError(f.n, p.n)
    total: np.ndarray | float = 0.0
    for j in range(p.n):
        total = total + _directional(f, p, VectorField.X, j, s, second=True)
        total = total + _directional(f, p, VectorField.Y, j, s, second=True)
    return 0.25 * np.asarray(total)


def horizontal_gradient(f: ScalarField, p: HPoint, s: StencilParams) -> np.ndarray:
    """Coefficients (X_1 f, ..., X_n f, Y_1 f, ..., Y_n f) stacked on the last axis."""
    xs = [apply_field(VectorField.X, f, p, s, j) for j in range(p.n)]
    ys = [apply_field(VectorField.Y, f, p, s, j) for j in range(p.n)]
    return np.stack(xs + ys, axis=-1)


def euclidean_gradient(f: ScalarField, p: HPoint, s: StencilParams) -> np.ndarray:
    """Partials (∂x_1, ..., ∂x_n, ∂y_1, ..., ∂y_n, ∂t) by central differences."""
    partials = []
    for direction in range(2 * p.n + 1):
        total: np.ndarray | float = 0.0
        for offset, weight in _FIRST_DERIVATIVE[s.order]:
            dz = np.zeros(p.n, dtype=complex)
            dt = 0.0
            if direction < p.n:
                dz[direction] = offset * s.h
            elif direction < 2 * p.n:
                dz[direction - p.n] = 1j * offset * s.h
            else:
                dt = offset * s.h
            total = total + weight * f(HPoint(p.z + dz, p.t + dt))
        partials.append(np.asarray(total) / s.h)
    return np.stack(partials, axis=-1)


def _check_non_characteristic(modulus: np.ndarray, threshold: float) -> None:
    smallest = float(np.min(modulus)) if np.size(modulus) else np.inf
    if smallest < threshold:
        raise CharacteristicPointError(smallest, threshold)


def horizontal_normal_coefficients(
    p: HPoint, char_threshold: float = DEFAULT_CHAR_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (a_j, b_j) with ∂⊥ = Σ a_j X_j + b_j Y_j.

    a_j + i b_j = conj(A) z_j / |z| with A = |z|² + it; the closed form of
    (1/|z|)(ĀE + AĒ) on real functions.
    """
    modulus = np.sqrt(p.modulus_squared())
    _check_non_characteristic(modulus, char_threshold)
    a_bar = p.modulus_squared() - 1j * p.t
    coeff = a_bar[..., None] * p.z / modulus[..., None]
    return coeff.real, coeff.imag


def horizontal_normal_derivative(
    f: ScalarField,
    p: HPoint,
    s: StencilParams,
    *,
    char_threshold: float = DEFAULT_CHAR_THRESHOLD,
    limit: complex | None = None,
) -> np.ndarray:
    """(1/|z|)(Ā·Ef + A·Ēf) with E = Σ z_j Z_j and A = |z|² + it.

    At characteristic points the caller supplies the limiting value through
    `limit`; otherwise `CharacteristicPointError` is raised.
    """
    modulus = np.sqrt(p.modulus_squared())
    singular = modulus < char_threshold
    if np.any(singular) and limit is None:
        raise CharacteristicPointError(float(np.min(modulus)), char_threshold)
    e_f: np.ndarray | complex = 0.0
    ebar_f: np.ndarray | complex = 0.0
    for j in range(p.n):
        e_f = e_f + p.z[..., j] * apply_field(VectorField.Z, f, p, s, j)
        ebar_f = ebar_f + np.conj(p.z[..., j]) * apply_field(VectorField.ZBAR, f, p, s, j)
    a = p.modulus_squared() + 1j * p.t
    safe = np.where(singular, 1.0, modulus)
    value = (np.conj(a) * e_f + a * ebar_f) / safe
    if np.any(singular):
        value = np.where(singular, limit, value)
    return np.asarray(value)


def shift_along_normal(
    p: HPoint, h: float, char_threshold: float = DEFAULT_CHAR_THRESHOLD
) -> HPoint:
    """Move p by h along the unit horizontal normal, p·exp(h n₀)."""
    a, b = horizontal_normal_coefficients(p, char_threshold)
    length = np.sqrt(np.sum(a**2 + b**2, axis=-1))[..., None]
    return group_mul(p, HPoint(h * (a + 1j * b) / length, np.zeros(p.shape)))


def inversion(p: HPoint) -> HPoint:
    """h([z,t]) = [−z/(|z|²−it), −t/(|z|⁴+t²)]; an involution of H_n \\ {e}."""
    norm4 = gauge_norm(p) ** 4
    if np.any(norm4 == 0.0):
        raise PoleError("Inversion is undefined at the identity.")
    denominator = p.modulus_squared() - 1j * p.t
    return HPoint(-p.z / denominator[..., None], -p.t / norm4)


def kelvin_transform(f: ScalarField, n: int | None = None) -> ScalarField:
    """Kf = N^{−2n} f∘h."""
    dimension = f.n if n is None else n
    if dimension != f.n:
        raise DimensionMismatchError(f.n, dimension)

    def transformed(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        point = HPoint(z, t)
        return gauge_norm(point) ** (-2 * dimension) * f(inversion(point))

    return ScalarField(transformed, n=dimension, circular=f.circular, name=f"K({f.name})")


def polar_h1(
    direction: Literal["to", "from"],
    coords: tuple[np.ndarray, np.ndarray, np.ndarray] | HPoint,
    scale: float = 1.0,
) -> HPoint | tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polar coordinates of H_1.

    ρ = r cos^{1/2}α, t = r² sin α, θ = φ + tan α · log(r/a). "to" maps
    (r, φ, α) to a point; "from" maps a point off the centre back to (r, φ, α).
    """
    if scale <= 0:
        raise ValueError(f"Polar scale must be positive, got {scale}.")
    if direction == "to":
        r, phi, alpha = (np.asarray(c, dtype=float) for c in coords)
        if np.any(np.abs(alpha) > np.pi / 2):
            raise ValueError("Polar angle α must lie in [−π/2, π/2].")
        if np.any(r <= 0):
            raise ValueError("Polar radius r must be positive.")
        cos_alpha = np.clip(np.cos(alpha), 0.0, None)
        pole = np.isclose(np.abs(alpha), np.pi / 2)
        twist = np.where(pole, 0.0, np.tan(np.where(pole, 0.0, alpha)) * np.log(r / scale))
        theta = phi + twist
        rho = r * np.sqrt(cos_alpha)
        return HPoint((rho * np.exp(1j * theta))[..., None], r**2 * np.sin(alpha))
    if direction == "from":
        if not isinstance(coords, HPoint) or coords.n != 1:
            raise DimensionMismatchError(1, getattr(coords, "n", -1))
        r = gauge_norm(coords)
        if np.any(r == 0):
            raise PoleError("Polar coordinates are undefined at the centre.")
        rho2 = coords.modulus_squared()
        alpha = np.arctan2(coords.t, rho2)
        theta = np.angle(coords.z[..., 0])
        phi = np.mod(theta - np.tan(alpha) * np.log(r / scale), 2 * np.pi)
        return r, phi, alpha
    raise ValueError(f"Unknown polar direction {direction!r}.")
