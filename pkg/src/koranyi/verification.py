"""Identity suite run by `koranyi verify`.

Every check returns the measured defect next to its threshold; quadrature
based checks need the Korányi sphere rules and are skipped for n ≥ 2.
"""

from __future__ import annotations

import logging
import zlib
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.special import gamma

from koranyi.config import RunConfig
from koranyi.expressions import expression_field
from koranyi.heisenberg import (
    CharacteristicPointError,
    HPoint,
    PoleError,
    ScalarField,
    VectorField,
    apply_field,
    commutator,
    gauge_norm,
    group_mul,
    horizontal_normal_derivative,
    inverse,
    outer_pairs,
    sublaplacian_L0,
)
from koranyi.kernels import (
    FitError,
    KernelCoefficients,
    KernelPair,
    RegimeError,
    averaged_fundamental,
    closed_form_coefficient,
    fundamental_field,
    fundamental_flux,
    neumann_kernel_field,
    normalized_coefficients,
    project_coefficients,
)
from koranyi.layers import (
    DensityVector,
    build_K,
    build_Kprime,
    jump_probe,
    singular_values,
)
from koranyi.neumann import probe_grid, solve_via_kernel
from koranyi.problems import add_problems, build_problem
from koranyi.quadrature import (
    QuadratureError,
    SurfaceQuadrature,
    VolumeQuadrature,
    ball_quadrature,
    first_identity_residual,
    greens_identity_residual,
    integrate_surface,
    solvability_check,
    sphere_quadrature,
)
from koranyi.special import ConvergenceError, circular_average

logger = logging.getLogger(__name__)

NUMERICAL_FAILURES = (
    FitError,
    RegimeError,
    ConvergenceError,
    QuadratureError,
    CharacteristicPointError,
    PoleError,
)

# (re z, im z, t) of interior poles for the flux check.
FLUX_POLES = (
    (0.0, 0.0, 0.0),
    (0.3, 0.0, 0.1),
    (0.0, 0.2, -0.3),
    (0.5, 0.0, 0.0),
    (0.1, 0.1, 0.4),
)
JUMP_NODES = 10
MIN_JUMP_MODULUS = 0.3
NEUMANN_TRUNCATIONS = (4, 6, 8)
MAX_ORBIT_RATIO = 0.8
MIN_PAIR_DISTANCE = 0.1


class UnknownCheckError(ValueError):
    pass


def _x(z: np.ndarray) -> np.ndarray:
    return np.sum(z.real, axis=-1)


def _y(z: np.ndarray) -> np.ndarray:
    return np.sum(z.imag, axis=-1)


COMMUTATOR_FIELDS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "x^2 y": lambda z, t: _x(z) ** 2 * _y(z),
    "t^2 + x y": lambda z, t: t**2 + _x(z) * _y(z),
    "x^4 + t y": lambda z, t: _x(z) ** 4 + t * _y(z),
    "|z|^4 + t^2": lambda z, t: np.sum(np.abs(z) ** 2, axis=-1) ** 2 + t**2,
    "x t^2": lambda z, t: _x(z) * t**2,
    "exp(x) cos(t)": lambda z, t: np.exp(_x(z)) * np.cos(t),
}


def sphere_area_h1() -> float:
    """|∂B| for n = 1 under the surface measure (1/4)cos^{1/2}α dφ dα."""
    return float(np.pi / 2 * np.sqrt(np.pi) * gamma(0.75) / gamma(1.25))


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    defect: float
    threshold: float
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    skipped: bool = False

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "defect": self.defect,
            "threshold": self.threshold,
            "passed": self.passed,
            "skipped": self.skipped,
            "details": self.details,
        }


@dataclass(frozen=True)
class SuiteReport:
    checks: tuple[IdentityCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[IdentityCheck]:
        return [check for check in self.checks if not check.passed]

    def to_document(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [check.to_document() for check in self.checks]}


def _below(name: str, defect: float, threshold: float, **details: Any) -> IdentityCheck:
    return IdentityCheck(
        name=name,
        defect=float(defect),
        threshold=float(threshold),
        passed=bool(np.isfinite(defect) and defect <= threshold),
        details=details,
    )


def _skipped(name: str, threshold: float, reason: str) -> IdentityCheck:
    return IdentityCheck(
        name=name,
        defect=float("nan"),
        threshold=threshold,
        passed=True,
        details={"reason": reason},
        skipped=True,
    )


class SuiteContext:
    """Rules, coefficients and seeded generators shared by the checks of one run."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self._fits: dict[tuple[int, int], KernelCoefficients] = {}

    def rng(self, check: str) -> np.random.Generator:
        # One stream per check so selecting a subset does not shift the others.
        return np.random.default_rng([self.config.seed, zlib.crc32(check.encode("utf-8"))])

    @property
    def has_rules(self) -> bool:
        return self.config.n == 1

    @cached_property
    def sq(self) -> SurfaceQuadrature:
        return sphere_quadrature(self.config.n, self.config.quadrature.sphere)

    @cached_property
    def vq(self) -> VolumeQuadrature:
        return ball_quadrature(self.config.n, self.config.quadrature.ball)

    @cached_property
    def eta(self) -> HPoint:
        return check_pole(self.config)

    def coefficients(self, M: int, K: int) -> KernelCoefficients:
        """Fitted coefficients, normalized at the check pole when sphere rules exist."""
        if (M, K) not in self._fits:
            series = self.config.series
            self._fits[(M, K)] = normalized_coefficients(
                self.config.n,
                M,
                K,
                self.eta,
                self.sq if self.has_rules else None,
                pairs=series.fit_pairs,
                ratio=series.ratio,
                seed=self.config.seed,
            )
        return self._fits[(M, K)]


def check_pole(config: RunConfig) -> HPoint:
    """The configured pole, spread evenly over the z components when n ≥ 2."""
    re, im, t = config.series.eta
    return HPoint(np.full(config.n, complex(re, im) / np.sqrt(config.n)), t)


def _gauge_sample(
    rng: np.random.Generator, count: int, n: int, low: float, high: float
) -> HPoint:
    z = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    t = rng.normal(size=count)
    raw = HPoint(z, t)
    norm = gauge_norm(raw)
    radius = rng.uniform(low, high, size=count)
    return HPoint(raw.z * (radius / norm)[:, None], raw.t * (radius / norm) ** 2)


def check_commutator(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    rng = ctx.rng("commutator")
    points = HPoint(
        rng.uniform(-1, 1, (50, cfg.n)) + 1j * rng.uniform(-1, 1, (50, cfg.n)),
        rng.uniform(-1, 1, 50),
    )
    worst = 0.0
    for label, func in COMMUTATOR_FIELDS.items():
        f = ScalarField(func, n=cfg.n, name=label)
        for j in range(cfg.n):
            bracket = commutator(VectorField.X, VectorField.Y, f, points, cfg.stencil, j)
            vertical = apply_field(VectorField.T, f, points, cfg.stencil, j)
            worst = max(worst, float(np.max(np.abs(bracket + 4.0 * vertical))))
    return _below(
        "commutator [X,Y] = -4T",
        worst,
        cfg.tolerances.commutator,
        fields=len(COMMUTATOR_FIELDS),
        points=50,
    )


def check_harmonicity(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    points = _gauge_sample(ctx.rng("harmonicity"), 100, cfg.n, 0.3, 2.0)
    g = fundamental_field(HPoint.identity(cfg.n))
    relative = np.abs(sublaplacian_L0(g, points, cfg.stencil)) * gauge_norm(points) ** 2
    relative = relative / np.abs(g(points))
    return _below("L0 g_e = 0 off the pole", float(np.max(relative)), cfg.tolerances.harmonicity)


def _orbit_separated_pairs(ctx: SuiteContext, count: int) -> tuple[HPoint, HPoint]:
    n = ctx.config.n
    rng = ctx.rng("averaged-kernel")
    poles: list[HPoint] = []
    points: list[HPoint] = []
    while len(poles) < count:
        eta = _gauge_sample(rng, 4 * count, n, 0.0, 1.0)
        xi = _gauge_sample(rng, 4 * count, n, 0.0, 1.0)
        c, p = KernelPair(eta, n).c_and_p(xi)
        distance = gauge_norm(group_mul(inverse(eta), xi))
        separated = np.abs(p) ** 2 <= MAX_ORBIT_RATIO * np.abs(c) ** 2
        keep = (distance >= MIN_PAIR_DISTANCE) & separated
        poles.extend(eta[i] for i in np.flatnonzero(keep))
        points.extend(xi[i] for i in np.flatnonzero(keep))
    return HPoint.stack(poles[:count]), HPoint.stack(points[:count])


def check_averaged_kernel(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    eta, xi = _orbit_separated_pairs(ctx, 100)
    closed = averaged_fundamental(eta, xi)
    quadrature = circular_average(fundamental_field(eta), xi, cfg.quadrature.theta_nodes)
    return _below(
        "averaged kernel = theta-average of g",
        float(np.max(np.abs(closed - np.real(quadrature)))),
        cfg.tolerances.averaged_kernel,
        theta_nodes=cfg.quadrature.theta_nodes,
    )


def check_flux(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "flux of g through the sphere = -1"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.flux, "sphere rules exist for n = 1 only")
    poles = HPoint(
        np.array([[complex(re, im)] for re, im, _ in FLUX_POLES]),
        np.array([t for *_, t in FLUX_POLES]),
    )
    pole_b, point_b = outer_pairs(poles, ctx.sq.nodes)
    fluxes = integrate_surface(ctx.sq, fundamental_flux(pole_b, point_b, cfg.char_threshold))
    return _below(
        name,
        float(np.max(np.abs(fluxes + 1.0))),
        cfg.tolerances.flux,
        sign=-1,
        fluxes=[float(v) for v in fluxes],
    )


def _jump_nodes(ctx: SuiteContext) -> np.ndarray:
    candidates = np.flatnonzero(ctx.sq.nodes.modulus_squared() >= MIN_JUMP_MODULUS**2)
    picks = ctx.rng("jumps").choice(candidates, size=JUMP_NODES, replace=False)
    return np.sort(picks)


def check_jumps(ctx: SuiteContext) -> IdentityCheck:
    """Double layer jumps by φ; the single layer normal derivative jumps by −φ."""
    cfg = ctx.config
    name = "layer potential jumps"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.jump, "sphere rules exist for n = 1 only")
    densities = {"1": "1", "t": "t", "|z|^2": "z2"}
    worsts = {"jump": 0.0, "normal_jump": 0.0, "single_normal_jump": 0.0}
    unsettled = 0
    for source in densities.values():
        phi = DensityVector.sample(ctx.sq, expression_field(source, cfg.n))
        scale = max(1e-12, float(np.max(np.abs(phi.values))))
        for index in _jump_nodes(ctx):
            limits = jump_probe(phi, int(index), char_threshold=cfg.char_threshold)
            unsettled += not limits.converged
            value = phi.values[index]
            for key, defect in (
                ("jump", limits.jump - value),
                ("normal_jump", limits.normal_jump),
                ("single_normal_jump", limits.single_normal_jump + value),
            ):
                worsts[key] = max(worsts[key], abs(defect) / scale)
    return _below(
        name,
        max(worsts.values()),
        cfg.tolerances.jump,
        densities=list(densities),
        nodes=JUMP_NODES,
        unsettled=unsettled,
        **worsts,
    )


def _halved(res: tuple[int, int]) -> tuple[int, int]:
    """Half the sphere resolution, keeping the φ count even."""
    return max(8, res[0] // 4 * 2), max(8, res[1] // 2)


def check_spectrum(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "I + K has a one-dimensional kernel"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.spectral_small, "sphere rules exist for n = 1 only")
    fine = cfg.quadrature.sphere
    coarse = _halved(fine)
    smallest: list[float] = []
    second: list[float] = []
    for res in (coarse, fine):
        values = singular_values(sphere_quadrature(cfg.n, res), "K", cfg.solve.diag_rule)
        smallest.append(float(values[0]))
        second.append(float(values[1]))
    passed = max(smallest) <= cfg.tolerances.spectral_small and min(second) >= (
        cfg.tolerances.spectral_gap
    )
    return IdentityCheck(
        name=name,
        defect=max(smallest),
        threshold=cfg.tolerances.spectral_small,
        passed=passed,
        details={
            "resolutions": [list(coarse), list(fine)],
            "smallest": smallest,
            "second": second,
            "second_minimum": cfg.tolerances.spectral_gap,
        },
    )


def check_adjointness(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "K' is the dsigma-adjoint of K"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.green, "sphere rules exist for n = 1 only")
    w = ctx.sq.weights
    k = build_K(ctx.sq, "punctured", cfg.char_threshold)
    k_prime = build_Kprime(ctx.sq, "punctured", cfg.char_threshold)
    weighted = w[:, None] * k_prime
    defect = float(np.max(np.abs(weighted - (w[:, None] * k).T)) / np.max(np.abs(weighted)))
    return _below(name, defect, cfg.tolerances.green)


GREEN_PAIR = ("z2*t", "z2 + t^2")


def check_green(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "Green identities"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.green, "sphere rules exist for n = 1 only")
    u, v = (expression_field(source, cfg.n) for source in GREEN_PAIR)
    second = greens_identity_residual(u, v, ctx.sq, ctx.vq, cfg.stencil, cfg.char_threshold)
    first = first_identity_residual(u, v, ctx.sq, ctx.vq, cfg.stencil, cfg.char_threshold)
    return _below(name, max(first, second), cfg.tolerances.green, first=first, second=second)


def check_series_fit(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    series = cfg.series
    name = "series fit of the averaged kernel"
    if cfg.n != 1:
        return _skipped(
            name, cfg.tolerances.fit_residual, "the circular series exists for n = 1 only"
        )
    coeffs = ctx.coefficients(series.M, series.K)
    pinned = project_coefficients(
        cfg.n,
        series.M,
        series.K,
        pairs=series.fit_pairs,
        ratio=series.ratio,
        seed=cfg.seed,
        eta=HPoint.identity(cfg.n),
    )
    leading = abs(pinned.a[0, 0].real - closed_form_coefficient(cfg.n, 0))
    passed = coeffs.residual <= cfg.tolerances.fit_residual and leading <= (
        cfg.tolerances.closed_form
    )
    return IdentityCheck(
        name=name,
        defect=coeffs.residual,
        threshold=cfg.tolerances.fit_residual,
        passed=bool(passed),
        details={
            "M": series.M,
            "K": series.K,
            "a00_error": leading,
            "a00_threshold": cfg.tolerances.closed_form,
        },
    )


def check_neumann_boundary(ctx: SuiteContext) -> IdentityCheck:
    """∂⊥N_B(η, ·) matches ∂⊥g_e on the sphere, improving with the truncation."""
    cfg = ctx.config
    name = "Neumann kernel boundary flux"
    tol = cfg.tolerances.neumann_boundary
    if not ctx.has_rules:
        return _skipped(name, tol, "sphere rules exist for n = 1 only")
    nodes = ctx.sq.nodes
    reference = fundamental_flux(HPoint.identity(cfg.n), nodes, cfg.char_threshold)
    defects: list[float] = []
    for order in NEUMANN_TRUNCATIONS:
        kernel = neumann_kernel_field(ctx.coefficients(order, order), ctx.eta)
        flux = horizontal_normal_derivative(
            kernel, nodes, cfg.stencil, char_threshold=cfg.char_threshold
        )
        defects.append(float(np.max(np.abs(flux - reference))))
    # Steps that stay under the threshold count as settled even when noise reverses them.
    settled = all(
        later <= earlier or later <= tol
        for earlier, later in zip(defects, defects[1:], strict=False)
    )
    return IdentityCheck(
        name=name,
        defect=defects[-1],
        threshold=tol,
        passed=bool(settled and defects[-1] <= tol),
        details={"truncations": list(NEUMANN_TRUNCATIONS), "defects": defects},
    )


def check_compatibility_gate(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "compatibility gate rejects g = 1"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.compat, "sphere rules exist for n = 1 only")
    problem = build_problem("incompatible", n=cfg.n, tol_compat=cfg.tolerances.compat)
    result = solvability_check(problem.f, problem.g, ctx.sq, ctx.vq, cfg.tolerances.compat)
    defect = abs(result.gap - sphere_area_h1())
    return IdentityCheck(
        name=name,
        defect=defect,
        threshold=cfg.tolerances.compat,
        passed=bool(not result.passed and defect <= cfg.tolerances.compat),
        details={"gap": result.gap, "area": sphere_area_h1()},
    )


def check_uniqueness_and_linearity(ctx: SuiteContext) -> IdentityCheck:
    cfg = ctx.config
    name = "zero data give zero; solutions add"
    if not ctx.has_rules:
        return _skipped(name, cfg.tolerances.solution_error, "sphere rules exist for n = 1 only")
    coeffs = ctx.coefficients(cfg.series.M, cfg.series.K)
    probes = probe_grid(cfg.solve.probes)

    def solve(problem) -> np.ndarray:
        report = solve_via_kernel(
            problem,
            coeffs,
            ctx.sq,
            ctx.vq,
            probes=probes,
            ray_res=cfg.quadrature.ray,
            stencil=cfg.stencil,
            max_fit_residual=cfg.tolerances.fit_residual,
        )
        return report.u_samples

    def named(label: str):
        return build_problem(label, n=cfg.n, tol_compat=cfg.tolerances.compat)

    zero = float(np.max(np.abs(solve(named("zero")))))
    first, second = named("t-flux"), named("z2-source")
    combined = solve(add_problems(first, second))
    separate = solve(first) + solve(second)
    scale = max(1.0, float(np.max(np.abs(combined))))
    linearity = float(np.max(np.abs(combined - separate))) / scale
    return _below(
        name,
        max(zero, linearity),
        cfg.tolerances.solution_error,
        zero=zero,
        linearity=linearity,
    )


IDENTITY_CHECKS: dict[str, Callable[[SuiteContext], IdentityCheck]] = {
    "commutator": check_commutator,
    "harmonicity": check_harmonicity,
    "averaged-kernel": check_averaged_kernel,
    "flux": check_flux,
    "jumps": check_jumps,
    "spectrum": check_spectrum,
    "adjointness": check_adjointness,
    "green": check_green,
    "series-fit": check_series_fit,
    "neumann-boundary": check_neumann_boundary,
    "compatibility": check_compatibility_gate,
    "uniqueness": check_uniqueness_and_linearity,
}


def run_identity_suite(config: RunConfig, only: Iterable[str] | None = None) -> SuiteReport:
    """Run the selected checks (all of them by default) in registry order."""
    selected = list(IDENTITY_CHECKS) if only is None else list(dict.fromkeys(only))
    unknown = [label for label in selected if label not in IDENTITY_CHECKS]
    if unknown:
        known = ", ".join(IDENTITY_CHECKS)
        raise UnknownCheckError(f"Unknown identity checks {unknown}; known checks are {known}.")
    ctx = SuiteContext(config)
    checks = []
    for label in IDENTITY_CHECKS:
        if label not in selected:
            continue
        try:
            check = IDENTITY_CHECKS[label](ctx)
        except NUMERICAL_FAILURES as exc:
            logger.warning("Identity check %s aborted: %s", label, exc)
            check = IdentityCheck(
                name=label,
                defect=float("nan"),
                threshold=float("nan"),
                passed=False,
                details={"error": str(exc)},
            )
        logger.info("%s: defect %.3e (threshold %.1e)", check.name, check.defect, check.threshold)
        checks.append(check)
    return SuiteReport(tuple(checks))
