from __future__ import annotations

from pathlib import Path

import typer

from koranyi.cli.commands import (
    eval_kernel_command,
    fit_coeffs_command,
    init_command,
    solve_command,
    verify_command,
)
from koranyi.cli.runtime import configure_logging

app = typer.Typer(help="Neumann problem for the Kohn-Laplacian on the Korányi ball.")

CONFIG_OPTION = typer.Option(None, "--config", help="Run document (YAML or JSON).")
OUT_OPTION = typer.Option(None, "--out", help="Directory for JSON and CSV artifacts.")
SEED_OPTION = typer.Option(None, "--seed", min=0, help="Seed for every random sample.")
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Show library log output.")


@app.command("init")
def init_entry(
    dry_run: bool = typer.Option(
        False, "--dry-run", help="Show what would change without writing."
    ),
) -> None:
    init_command(dry_run=dry_run)


@app.command("fit-coeffs")
def fit_coeffs_entry(
    config: Path | None = CONFIG_OPTION,
    out: Path | None = OUT_OPTION,
    seed: int | None = SEED_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    configure_logging(verbose)
    fit_coeffs_command(config_path=config, out=out, seed=seed)


@app.command("solve")
def solve_entry(
    config: Path | None = CONFIG_OPTION,
    out: Path | None = OUT_OPTION,
    seed: int | None = SEED_OPTION,
    method: str | None = typer.Option(
        None, "--method", help="Solver to run: kernel, bie or both."
    ),
    coeffs: Path | None = typer.Option(
        None, "--coeffs", help="Coefficient JSON written by fit-coeffs."
    ),
    verbose: bool = VERBOSE_OPTION,
) -> None:
    configure_logging(verbose)
    if method is not None and method not in {"kernel", "bie", "both"}:
        raise typer.BadParameter("Use kernel, bie or both.", param_hint="--method")
    solve_command(config_path=config, out=out, seed=seed, method=method, coeffs_path=coeffs)


@app.command("verify")
def verify_entry(
    config: Path | None = CONFIG_OPTION,
    out: Path | None = OUT_OPTION,
    seed: int | None = SEED_OPTION,
    check: list[str] | None = typer.Option(
        None, "--check", help="Run only this identity (repeatable)."
    ),
    verbose: bool = VERBOSE_OPTION,
) -> None:
    configure_logging(verbose)
    verify_command(config_path=config, out=out, seed=seed, checks=check)


@app.command("eval-kernel")
def eval_kernel_entry(
    config: Path | None = CONFIG_OPTION,
    out: Path | None = OUT_OPTION,
    seed: int | None = SEED_OPTION,
    coeffs: Path | None = typer.Option(
        None, "--coeffs", help="Coefficient JSON written by fit-coeffs."
    ),
    point: list[str] | None = typer.Option(
        None, "--point", help="Field point 're,im,t' (repeatable)."
    ),
    verbose: bool = VERBOSE_OPTION,
) -> None:
    configure_logging(verbose)
    eval_kernel_command(
        config_path=config, out=out, seed=seed, coeffs_path=coeffs, points=point
    )


def main() -> None:
    app()
