from __future__ import annotations

import typer

from koranyi.cli.runtime import local_config_path
from koranyi.config import (
    ensure_global_config,
    global_config_path,
    render_default_config_yaml,
    write_if_missing,
)


def init_command(*, dry_run: bool) -> None:
    run_document = local_config_path()
    if dry_run:
        typer.echo("🧪 [dry-run] Would create config files (if missing):")
        typer.echo(f"- {global_config_path()}")
        typer.echo(f"- {run_document}")
        return

    global_created = ensure_global_config()
    local_created = write_if_missing(run_document, render_default_config_yaml())
    typer.echo(
        "⚙️ Global config:"
        f" {'created' if global_created else 'already exists'} at {global_config_path()}"
    )
    typer.echo(
        "⚙️ Run document:"
        f" {'created' if local_created else 'already exists'} at {run_document}"
    )
