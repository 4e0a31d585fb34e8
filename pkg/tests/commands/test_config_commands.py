from __future__ import annotations

from unittest.mock import patch

import pytest
import typer

from koranyi.cli.commands.init import init_command
from koranyi.cli.commands.verify import verify_command


@patch("koranyi.cli.commands.init.typer.echo")
@patch("koranyi.cli.commands.init.global_config_path")
def test_init_command_dry_run_prints_config_paths(
    mock_global_path, mock_echo, tmp_path, monkeypatch
) -> None:
    mock_global_path.return_value = tmp_path / ".koranyi" / "config.yaml"
    monkeypatch.chdir(tmp_path)

    init_command(dry_run=True)

    printed = "\n".join(call.args[0] for call in mock_echo.call_args_list)
    assert str(tmp_path / ".koranyi" / "config.yaml") in printed
    assert str(tmp_path / "koranyi.yaml") in printed
    assert not (tmp_path / "koranyi.yaml").exists()


@patch("koranyi.cli.commands.init.typer.echo")
@patch("koranyi.cli.commands.init.write_if_missing")
@patch("koranyi.cli.commands.init.ensure_global_config")
def test_init_command_non_dry_run_calls_config_initializers(
    mock_ensure_global, mock_write, mock_echo, tmp_path, monkeypatch
) -> None:
    mock_ensure_global.return_value = True
    mock_write.return_value = False
    monkeypatch.chdir(tmp_path)

    init_command(dry_run=False)

    mock_ensure_global.assert_called_once_with()
    assert mock_write.call_args.args[0] == tmp_path / "koranyi.yaml"
    printed = "\n".join(call.args[0] for call in mock_echo.call_args_list)
    assert "Global config: created" in printed
    assert "Run document: already exists" in printed


@patch("koranyi.cli.commands.verify.typer.echo")
def test_verify_command_reports_skipped_checks(mock_echo, tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    (tmp_path / "koranyi.yaml").write_text("n: 2\n", encoding="utf-8")

    verify_command(config_path=None, out=tmp_path / "out", seed=None, checks=["compatibility"])

    printed = "\n".join(call.args[0] for call in mock_echo.call_args_list)
    assert "⏭️ compatibility gate rejects g = 1: skipped" in printed
    assert "All 1 identities hold" in printed


@patch("koranyi.cli.commands.verify.typer.echo")
def test_verify_command_exit_code_on_failure(mock_echo, tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    (tmp_path / "koranyi.yaml").write_text("stencil:\n  h: 0.5\n", encoding="utf-8")

    with pytest.raises(typer.Exit) as excinfo:
        verify_command(config_path=None, out=tmp_path / "out", seed=None, checks=["commutator"])

    assert excinfo.value.exit_code == 1
    printed = "\n".join(call.args[0] for call in mock_echo.call_args_list)
    assert "❌ commutator [X,Y] = -4T" in printed
