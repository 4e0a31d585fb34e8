from __future__ import annotations

from pathlib import Path

import typer

from koranyi.artifacts import write_json
from koranyi.cli.runtime import EXIT_CONFIG, EXIT_FAILURE, format_defect, resolve_config
from koranyi.verification import IdentityCheck, UnknownCheckError, run_identity_suite

VERIFY_FILE = "verify.json"


def verify_command(
    *,
    config_path: Path | None,
    out: Path | None,
    seed: int | None,
    checks: list[str] | None,
) -> None:
    config = resolve_config(config_path, out=out, seed=seed)
    try:
        report = run_identity_suite(config, checks or None)
    except UnknownCheckError as exc:
        typer.echo(f"❌ {exc}")
        raise typer.Exit(code=EXIT_CONFIG) from exc

    for check in report.checks:
        typer.echo(_line(check))
    target = write_json(config.output_dir / VERIFY_FILE, report.to_document())
    typer.echo(f"ℹ️ Report written to {target}")
    if not report.passed:
        typer.echo(f"❌ {len(report.failures())} of {len(report.checks)} identities failed.")
        raise typer.Exit(code=EXIT_FAILURE)
    typer.echo(f"✅ All {len(report.checks)} identities hold.")


def _line(check: IdentityCheck) -> str:
    if check.skipped:
        return f"⏭️ {check.name}: skipped ({check.details.get('reason', '')})"
    marker = "✅" if check.passed else "❌"
    return (
        f"{marker} {check.name}: defect {format_defect(check.defect)}"
        f" (threshold {format_defect(check.threshold)})"
    )
