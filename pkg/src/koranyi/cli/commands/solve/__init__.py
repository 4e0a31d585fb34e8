from __future__ import annotations

from pathlib import Path
from typing import Any

import typer

from koranyi.artifacts import read_json, write_json, write_probe_csv
from koranyi.cli.runtime import (
    COEFFICIENTS_FILE,
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_INCOMPATIBLE,
    fit_for_config,
    resolve_config,
)
from koranyi.config import RunConfig
from koranyi.expressions import ExpressionError
from koranyi.heisenberg import PoleError
from koranyi.kernels import FitError, KernelCoefficients, RegimeError, SeriesDimensionError
from koranyi.layers import CompatibilityError
from koranyi.neumann import (
    NeumannProblem,
    SolutionReport,
    cross_method_deviation,
    probe_grid,
    solve_via_bie,
    solve_via_kernel,
)
from koranyi.problems import UnknownProblemError, build_problem
from koranyi.quadrature import (
    QuadratureError,
    SurfaceQuadrature,
    ball_quadrature,
    solvability_check,
    sphere_quadrature,
)
from koranyi.special import ConvergenceError

SOLUTION_FILE = "solution.json"


def solve_command(
    *,
    config_path: Path | None,
    out: Path | None,
    seed: int | None,
    method: str | None,
    coeffs_path: Path | None,
) -> None:
    config = resolve_config(config_path, out=out, seed=seed, method=method)
    if config.n != 1:
        typer.echo(f"❌ Solves need the n=1 sphere and ball rules; config has n={config.n}.")
        raise typer.Exit(code=EXIT_CONFIG)
    problem = _problem_from_config(config)
    methods = ["kernel", "bie"] if config.solve.method == "both" else [config.solve.method]

    sq = sphere_quadrature(config.n, config.quadrature.sphere)
    vq = ball_quadrature(config.n, config.quadrature.ball)
    probes = probe_grid(config.solve.probes)
    gate = solvability_check(problem.f, problem.g, sq, vq, problem.tol_compat)
    if not gate.passed:
        typer.echo(
            f"❌ Data are incompatible: ∫f dv = {gate.interior:.6g},"
            f" ∫g dσ = {gate.boundary:.6g}, gap {gate.gap:.6g}."
        )
        raise typer.Exit(code=EXIT_INCOMPATIBLE)
    reports: dict[str, SolutionReport] = {}
    try:
        for name in methods:
            if name == "kernel":
                coeffs = _coefficients(config, coeffs_path, sq)
                reports[name] = solve_via_kernel(
                    problem,
                    coeffs,
                    sq,
                    vq,
                    probes=probes,
                    ray_res=config.quadrature.ray,
                    max_fit_residual=config.tolerances.fit_residual,
                )
            else:
                reports[name] = solve_via_bie(
                    problem,
                    sq,
                    vq,
                    probes=probes,
                    ray_res=config.quadrature.ray,
                    diag_rule=config.solve.diag_rule,
                )
    except CompatibilityError as exc:
        typer.echo(f"❌ Data are incompatible: gap {exc.gap:.6g} (tolerance {exc.tol:.1e}).")
        raise typer.Exit(code=EXIT_INCOMPATIBLE) from exc
    except (FitError, SeriesDimensionError) as exc:
        typer.echo(f"❌ Kernel coefficients unusable: {exc}")
        raise typer.Exit(code=EXIT_FAILURE) from exc
    except (RegimeError, PoleError, QuadratureError, ConvergenceError) as exc:
        typer.echo(f"❌ Solve failed: {exc}")
        raise typer.Exit(code=EXIT_FAILURE) from exc

    document: dict[str, Any] = {
        "problem": problem.name,
        "n": config.n,
        "seed": config.seed,
        "reports": {name: report.to_document() for name, report in reports.items()},
    }
    failures = [message for report in reports.values() for message in _failures(report, config)]
    if len(reports) == 2:
        deviation = cross_method_deviation(reports["kernel"], reports["bie"])
        document["cross_method_deviation"] = deviation
        typer.echo(f"ℹ️ Cross-method deviation (stddev) {deviation:.3e}")
        if deviation > config.tolerances.cross_method:
            failures.append(
                f"cross-method deviation {deviation:.3e} > {config.tolerances.cross_method:.1e}"
            )
    document["passed"] = not failures

    target = write_json(config.output_dir / SOLUTION_FILE, document)
    for name, report in reports.items():
        csv_path = write_probe_csv(config.output_dir / f"probes-{name}.csv", report.rows())
        typer.echo(
            f"✅ {name}: interior residual {report.interior_residual:.3e},"
            f" boundary residual {report.boundary_residual:.3e} → {csv_path}"
        )
    typer.echo(f"ℹ️ {reports[methods[0]].constant_mode_note}")
    typer.echo(f"✅ Report written to {target}")
    if failures:
        for message in failures:
            typer.echo(f"❌ {message}")
        raise typer.Exit(code=EXIT_FAILURE)


def _problem_from_config(config: RunConfig) -> NeumannProblem:
    spec = config.problem
    try:
        return build_problem(
            spec.name,
            f=spec.f,
            g=spec.g,
            exact=spec.exact,
            n=config.n,
            tol_compat=config.tolerances.compat,
        )
    except (UnknownProblemError, ExpressionError, ValueError) as exc:
        typer.echo(f"❌ Invalid problem: {exc}")
        raise typer.Exit(code=EXIT_CONFIG) from exc


def _coefficients(
    config: RunConfig, coeffs_path: Path | None, sq: SurfaceQuadrature
) -> KernelCoefficients:
    """Coefficients from --coeffs, from a matching fit in the output directory, or a fresh fit."""
    series = config.series
    candidate = coeffs_path or config.output_dir / COEFFICIENTS_FILE
    if candidate.exists():
        coeffs = KernelCoefficients.from_document(read_json(candidate))
        if coeffs.pinned:
            if coeffs_path is not None:
                typer.echo(f"⚠️ {candidate} was fitted at the pole e only; refitting.")
        elif (coeffs.n, coeffs.M, coeffs.K) == (config.n, series.M, series.K):
            return coeffs
        elif coeffs_path is not None:
            typer.echo(
                f"⚠️ {candidate} holds n={coeffs.n} M={coeffs.M} K={coeffs.K}; refitting."
            )
    return fit_for_config(config, sq, pin=False)


def _failures(report: SolutionReport, config: RunConfig) -> list[str]:
    tolerances = config.tolerances
    messages = []
    if report.interior_residual > tolerances.interior_residual:
        messages.append(
            f"{report.method}: interior residual {report.interior_residual:.3e}"
            f" > {tolerances.interior_residual:.1e}"
        )
    if report.boundary_residual > tolerances.boundary_residual:
        messages.append(
            f"{report.method}: boundary residual {report.boundary_residual:.3e}"
            f" > {tolerances.boundary_residual:.1e}"
        )
    if report.max_error is not None and report.max_error > tolerances.solution_error:
        messages.append(
            f"{report.method}: error against the exact solution {report.max_error:.3e}"
            f" > {tolerances.solution_error:.1e}"
        )
    return messages
