from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any

import typer

from koranyi.config import ConfigError, RunConfig, load_config
from koranyi.heisenberg import HPoint
from koranyi.kernels import KernelCoefficients, normalized_coefficients
from koranyi.quadrature import SurfaceQuadrature
from koranyi.verification import check_pole

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INCOMPATIBLE = 3

LOCAL_CONFIG_NAME = "koranyi.yaml"
COEFFICIENTS_FILE = "coefficients.json"


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def local_config_path() -> Path:
    return Path.cwd() / LOCAL_CONFIG_NAME


def resolve_config(
    config_path: Path | None,
    *,
    out: Path | None = None,
    seed: int | None = None,
    method: str | None = None,
) -> RunConfig:
    """Load the run document; flags override it and config errors exit with code 2."""
    if config_path is None and local_config_path().exists():
        config_path = local_config_path()
    overrides: dict[str, Any] = {}
    if out is not None:
        overrides["output"] = {"dir": str(out)}
    if seed is not None:
        overrides["seed"] = seed
    if method is not None:
        overrides["solve"] = {"method": method}
    try:
        return load_config(config_path, overrides)
    except ConfigError as exc:
        typer.echo(f"❌ Invalid configuration: {exc}")
        raise typer.Exit(code=EXIT_CONFIG) from exc


def fit_for_config(
    config: RunConfig, sq: SurfaceQuadrature | None = None, *, pin: bool | None = None
) -> KernelCoefficients:
    """Fit for the configured pole; by default the pole is pinned when it is the identity."""
    series = config.series
    return normalized_coefficients(
        config.n,
        series.M,
        series.K,
        check_pole(config),
        sq,
        pairs=series.fit_pairs,
        ratio=series.ratio,
        seed=config.seed,
        pin=not any(series.eta) if pin is None else pin,
    )


def format_defect(value: float) -> str:
    return "n/a" if math.isnan(value) else f"{value:.3e}"


def parse_point(text: str) -> HPoint:
    """`re,im,t` to a point of H_1."""
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != 3:
        raise typer.BadParameter(f"Expected 're,im,t', got {text!r}.")
    try:
        re, im, t = (float(part) for part in parts)
    except ValueError as exc:
        raise typer.BadParameter(f"Expected three numbers in {text!r}.") from exc
    return HPoint([complex(re, im)], t)
