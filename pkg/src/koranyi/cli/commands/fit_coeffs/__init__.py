from __future__ import annotations

from pathlib import Path

import typer

from koranyi.artifacts import write_json
from koranyi.cli.runtime import (
    COEFFICIENTS_FILE,
    EXIT_CONFIG,
    EXIT_FAILURE,
    fit_for_config,
    resolve_config,
)
from koranyi.kernels import FitError, SeriesDimensionError
from koranyi.quadrature import sphere_quadrature


def fit_coeffs_command(*, config_path: Path | None, out: Path | None, seed: int | None) -> None:
    config = resolve_config(config_path, out=out, seed=seed)
    series = config.series
    sq = sphere_quadrature(config.n, config.quadrature.sphere) if config.n == 1 else None
    try:
        coeffs = fit_for_config(config, sq)
    except SeriesDimensionError as exc:
        typer.echo(f"❌ Invalid configuration: {exc}")
        raise typer.Exit(code=EXIT_CONFIG) from exc
    except FitError as exc:
        typer.echo(f"❌ Coefficient fit failed: {exc}")
        raise typer.Exit(code=EXIT_FAILURE) from exc

    target = write_json(config.output_dir / COEFFICIENTS_FILE, coeffs.to_document())
    typer.echo(f"✅ Wrote n={config.n} M={series.M} K={series.K} coefficients to {target}")
    typer.echo(f"ℹ️ Held-out residual {coeffs.residual:.3e}, b0 {coeffs.b0:.6g}")
    if not coeffs.residual <= config.tolerances.fit_residual:
        typer.echo(
            f"❌ Residual {coeffs.residual:.3e} exceeds {config.tolerances.fit_residual:.1e}."
        )
        raise typer.Exit(code=EXIT_FAILURE)
