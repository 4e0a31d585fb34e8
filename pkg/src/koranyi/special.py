"""Special functions for the circular Heisenberg harmonics.

The Gauss hypergeometric series is summed directly; the kernels only ever
evaluate it inside the unit disc, so no analytic continuation is attempted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from koranyi.heisenberg import HPoint, ScalarField

logger = logging.getLogger(__name__)

DEFAULT_THETA_NODES = 64
MIN_THETA_NODES = 8


class ConvergenceError(RuntimeError):
    """Raised when a series misses its tolerance; keeps the partial sum."""

    def __init__(self, message: str, partial: np.ndarray) -> None:
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class CabIndex:
    m: int
    alpha: complex
    beta: complex

    def __post_init__(self) -> None:
        if self.m < 0:
            raise ValueError(f"Degree m must be non-negative, got {self.m}.")


@dataclass(frozen=True)
class HarmonicIndex:
    k: int
    l: int  # noqa: E741
    n: int

    def __post_init__(self) -> None:
        if self.k < 0 or self.l < 0:
            raise ValueError(f"Bidegree must be non-negative, got ({self.k}, {self.l}).")
        if self.n < 1:
            raise ValueError(f"Dimension must be at least 1, got n={self.n}.")


@dataclass(frozen=True)
class SeriesResult:
    value: np.ndarray
    converged: bool
    terms: int
    tail: float

    def require(self) -> np.ndarray:
        if not self.converged:
            raise ConvergenceError(
                f"Hypergeometric series stopped after {self.terms} terms "
                f"with tail estimate {self.tail:.2e}.",
                self.value,
            )
        return self.value


def pochhammer(x: complex | np.ndarray, m: int) -> complex | np.ndarray:
    """Rising factorial x(x+1)...(x+m−1); the empty product is 1."""
    if m < 0:
        raise ValueError(f"Pochhammer length must be non-negative, got {m}.")
    result = np.ones_like(np.asarray(x), dtype=complex if np.iscomplexobj(x) else float)
    for offset in range(m):
        result = result * (x + offset)
    return result[()] if result.ndim == 0 else result


def hyp2f1(
    a: complex,
    b: complex,
    c: complex,
    x: float | np.ndarray,
    *,
    rtol: float = 1e-12,
    max_terms: int = 200_000,
) -> SeriesResult:
    """Σ (a)_s (b)_s / ((c)_s s!) x^s for 0 ≤ x < 1, summed until the tail is below rtol."""
    if np.isreal(c) and float(np.real(c)) <= 0 and float(np.real(c)).is_integer():
        raise ValueError(f"c={c} is a non-positive integer; the series is undefined.")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr >= 1):
        raise ValueError("hyp2f1 is only summed for 0 ≤ x < 1.")
    complex_params = any(np.iscomplexobj(v) for v in (a, b, c))
    dtype = complex if complex_params else float
    term = np.ones_like(x_arr, dtype=dtype)
    total = term.copy()
    tail = np.inf
    for s in range(max_terms):
        ratio = (a + s) * (b + s) / ((c + s) * (s + 1))
        term = term * ratio * x_arr
        total = total + term
        # Ratios of later terms approach x, so a geometric bound on the tail is used.
        next_ratio = np.abs((a + s + 1) * (b + s + 1) / ((c + s + 1) * (s + 2))) * x_arr
        q = np.maximum(next_ratio, x_arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = np.where(q < 1, np.abs(term) * q / (1 - q), np.inf)
        scale = np.maximum(np.abs(total), np.finfo(float).tiny)
        tail = float(np.max(bound / scale))
        if tail <= rtol and np.all(next_ratio < 1):
            value = total[()] if total.ndim == 0 else total
            return SeriesResult(value=value, converged=True, terms=s + 2, tail=tail)
    logger.debug("hyp2f1 did not converge: a=%s b=%s c=%s tail=%.2e", a, b, c, tail)
    value = total[()] if total.ndim == 0 else total
    return SeriesResult(value=value, converged=False, terms=max_terms + 1, tail=tail)


def cab_coefficients(idx: CabIndex) -> np.ndarray:
    """Coefficients (α)_{m−p}(β)_p / ((m−p)! p!) for p = 0..m."""
    return np.array(
        [
            pochhammer(idx.alpha, idx.m - p)
            * pochhammer(idx.beta, p)
            / (math.factorial(idx.m - p) * math.factorial(p))
            for p in range(idx.m + 1)
        ],
        dtype=complex,
    )


def cab_poly(idx: CabIndex, sigma: complex | np.ndarray) -> np.ndarray:
    """C_m^{(α,β)}(ς, ς̄) = Σ_p (α)_{m−p}(β)_p/((m−p)! p!) ς̄^{m−p} ς^p."""
    sigma = np.asarray(sigma, dtype=complex)
    coefficients = cab_coefficients(idx)
    total = np.zeros_like(sigma)
    conj_sigma = np.conj(sigma)
    for p, coefficient in enumerate(coefficients):
        total = total + coefficient * conj_sigma ** (idx.m - p) * sigma**p
    return total


def has_circular_harmonic(k: int, n: int) -> bool:
    """Whether H_{k,k} on C^n is non-trivial; on C^1 only bidegree (0, 0) survives."""
    return k == 0 or n >= 2


def cq_coeffs(idx: HarmonicIndex, circular: bool) -> np.ndarray:
    """c_0 = 1 and (k−q)(l−q)c_q + (q+1)(n+q−1)c_{q+1} = 0 for 0 ≤ q < r."""
    if idx.n == 1:
        return np.ones(1)
    r = idx.k if circular else min(idx.k, idx.l)
    coefficients = np.ones(r + 1)
    for q in range(r):
        if circular:
            lead = (idx.k - q) ** 2
        else:
            lead = (idx.k - q) * (idx.l - q)
        coefficients[q + 1] = -lead * coefficients[q] / ((q + 1) * (idx.n + q - 1))
    return coefficients


def spherical_harmonic(idx: HarmonicIndex, z: np.ndarray, circular: bool) -> np.ndarray:
    """Representative Y_{k,l;j}(z), or its circular average Y_{k;j}(z) when `circular`."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape[-1] != idx.n:
        raise ValueError(f"Expected z with n={idx.n} components, got {z.shape[-1]}.")
    coefficients = cq_coeffs(idx, circular)
    z1 = z[..., 0]
    rest = np.sum(np.abs(z[..., 1:]) ** 2, axis=-1)
    total = np.zeros(z.shape[:-1], dtype=complex)
    for q, c_q in enumerate(coefficients):
        if circular:
            monomial = np.abs(z1) ** (2 * (idx.k - q))
        else:
            monomial = z1 ** (idx.k - q) * np.conj(z1) ** (idx.l - q)
        total = total + c_q * rest**q * monomial
    return total


def circular_average(
    f: ScalarField, p: HPoint, q_nodes: int = DEFAULT_THETA_NODES
) -> np.ndarray:
    """Trapezoidal (1/2π)∫ f([e^{iθ}z, t]) dθ."""
    if q_nodes < MIN_THETA_NODES:
        raise ValueError(f"circular_average needs at least {MIN_THETA_NODES} nodes.")
    total: np.ndarray | complex = 0.0
    for theta in np.arange(q_nodes) * (2 * np.pi / q_nodes):
        total = total + f(HPoint(p.z * np.exp(1j * theta), p.t))
    return np.asarray(total) / q_nodes


def averaged_field(f: ScalarField, q_nodes: int = DEFAULT_THETA_NODES) -> ScalarField:
    def averaged(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        return circular_average(f, HPoint(z, t), q_nodes)

    return ScalarField(averaged, n=f.n, circular=True, name=f"avg({f.name})")
