from __future__ import annotations

from pathlib import Path

import numpy as np
import typer

from koranyi.artifacts import read_json, write_json, write_probe_csv
from koranyi.cli.runtime import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    fit_for_config,
    parse_point,
    resolve_config,
)
from koranyi.heisenberg import HPoint, PoleError
from koranyi.kernels import (
    FitError,
    KernelCoefficients,
    RegimeError,
    averaged_fundamental,
    fundamental_solution,
    neumann_kernel,
)
from koranyi.quadrature import sphere_quadrature
from koranyi.verification import check_pole

DEFAULT_POINTS = ("0.5,0,0", "0,0,0.5", "0.6,0.2,-0.3", "0.9,0,0.1")
KERNEL_FILE = "kernel.json"
KERNEL_CSV = "kernel.csv"


def eval_kernel_command(
    *,
    config_path: Path | None,
    out: Path | None,
    seed: int | None,
    coeffs_path: Path | None,
    points: list[str] | None,
) -> None:
    config = resolve_config(config_path, out=out, seed=seed)
    if config.n != 1:
        typer.echo(f"❌ Kernel evaluation is available for n=1; config has n={config.n}.")
        raise typer.Exit(code=EXIT_CONFIG)
    eta = check_pole(config)
    xi = HPoint.stack([parse_point(text) for text in (points or DEFAULT_POINTS)])

    if coeffs_path is not None:
        coeffs = KernelCoefficients.from_document(read_json(coeffs_path))
        if coeffs.pinned and any(config.series.eta):
            typer.echo("❌ Coefficients in --coeffs were fitted for the pole e only.")
            raise typer.Exit(code=EXIT_CONFIG)
    else:
        try:
            coeffs = fit_for_config(
                config, sphere_quadrature(config.n, config.quadrature.sphere)
            )
        except FitError as exc:
            typer.echo(f"❌ Coefficient fit failed: {exc}")
            raise typer.Exit(code=EXIT_FAILURE) from exc

    try:
        g = fundamental_solution(eta, xi)
        g_bar = averaged_fundamental(eta, xi)
        kernel = neumann_kernel(coeffs, eta, xi)
    except (RegimeError, PoleError) as exc:
        typer.echo(f"❌ Cannot evaluate the kernel: {exc}")
        raise typer.Exit(code=EXIT_FAILURE) from exc

    rows = []
    for index in range(len(xi)):
        z = complex(xi.z[index, 0])
        rows.append([z.real, z.imag, float(xi.t[index]), float(np.real(kernel[index]))])
        typer.echo(
            f"ξ = ({z.real:+.3f}{z.imag:+.3f}i, {xi.t[index]:+.3f}):"
            f" g = {g[index]:.6e}, ḡ = {g_bar[index]:.6e}, N_B = {np.real(kernel[index]):.6e}"
        )
    document = {
        "eta": list(config.series.eta),
        "M": coeffs.M,
        "K": coeffs.K,
        "b0": coeffs.b0,
        "values": [
            {"xi": row[:3], "g": g[i], "g_bar": g_bar[i], "neumann": row[3]}
            for i, row in enumerate(rows)
        ],
    }
    target = write_json(config.output_dir / KERNEL_FILE, document)
    write_probe_csv(config.output_dir / KERNEL_CSV, rows)
    typer.echo(f"✅ Kernel values written to {target}")
