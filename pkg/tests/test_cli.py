import json
import math
from pathlib import Path

import pytest
from typer.testing import CliRunner

from koranyi.cli.app import app
from koranyi.kernels import FitError, RegimeError

runner = CliRunner()


def _document(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_init_creates_config_files(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["init"])

    assert result.exit_code == 0
    assert (tmp_path / ".koranyi" / "config.yaml").is_file()
    assert (tmp_path / "koranyi.yaml").is_file()
    assert "Global config: created" in result.output
    assert "Run document: created" in result.output


def test_init_dry_run_does_not_create_files(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["init", "--dry-run"])

    assert result.exit_code == 0
    assert not (tmp_path / ".koranyi" / "config.yaml").exists()
    assert not (tmp_path / "koranyi.yaml").exists()
    assert "[dry-run]" in result.output
    assert str(tmp_path / "koranyi.yaml") in result.output


def test_invalid_config_exits_with_code_2(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "series:\n  M: -1\n")

    result = runner.invoke(app, ["verify", "--config", str(document)])

    assert result.exit_code == 2
    assert "Invalid configuration" in result.output
    assert "series.M" in result.output


def test_local_run_document_is_picked_up(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    (tmp_path / "koranyi.yaml").write_text("stencil:\n  order: 3\n", encoding="utf-8")

    result = runner.invoke(app, ["verify", "--check", "commutator"])

    assert result.exit_code == 2
    assert "koranyi.yaml" in result.output


def test_verify_selected_check_writes_report(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(
        app, ["verify", "--check", "commutator", "--out", str(tmp_path / "out")]
    )

    assert result.exit_code == 0
    assert "✅ All 1 identities hold." in result.output
    report = json.loads((tmp_path / "out" / "verify.json").read_text(encoding="utf-8"))
    assert report["passed"] is True
    assert report["checks"][0]["name"] == "commutator [X,Y] = -4T"


def test_verify_fails_with_a_coarse_stencil(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "stencil:\n  h: 0.5\n")

    result = runner.invoke(
        app, ["verify", "--config", str(document), "--check", "commutator", "--out", "out"]
    )

    assert result.exit_code == 1
    assert "1 of 1 identities failed" in result.output


def test_verify_unknown_check_exits_with_code_2(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["verify", "--check", "riemann", "--out", "out"])

    assert result.exit_code == 2
    assert "Unknown identity checks" in result.output


def test_solve_rejects_incompatible_data(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "problem:\n  name: incompatible\n")

    result = runner.invoke(app, ["solve", "--config", str(document), "--out", "out"])

    assert result.exit_code == 3
    assert "Data are incompatible" in result.output
    assert not (tmp_path / "out" / "solution.json").exists()


def test_solve_rejects_unknown_methods_and_problems(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["solve", "--method", "direct"])
    assert result.exit_code == 2

    document = _document(tmp_path, "problem:\n  name: poisson\n")
    result = runner.invoke(app, ["solve", "--config", str(document)])
    assert result.exit_code == 2
    assert "Invalid problem" in result.output


def test_solve_needs_h1(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "n: 2\n")

    result = runner.invoke(app, ["solve", "--config", str(document)])

    assert result.exit_code == 2
    assert "n=2" in result.output


def test_fit_coeffs_then_eval_kernel(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    fitted = runner.invoke(app, ["fit-coeffs", "--out", "out"])
    assert fitted.exit_code == 0
    coefficients = tmp_path / "out" / "coefficients.json"
    document = json.loads(coefficients.read_text(encoding="utf-8"))
    assert document["M"] == 6 and document["K"] == 6
    assert document["residual"] <= 1e-4

    evaluated = runner.invoke(
        app, ["eval-kernel", "--coeffs", str(coefficients), "--out", "out", "--point", "0,0,0.5"]
    )
    assert evaluated.exit_code == 0
    assert "N_B" in evaluated.output
    values = json.loads((tmp_path / "out" / "kernel.json").read_text(encoding="utf-8"))["values"]
    assert len(values) == 1
    lines = (tmp_path / "out" / "kernel.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "z_re,z_im,t,value"


def test_fit_coeffs_pins_the_identity_pole(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "series:\n  M: 0\n  K: 0\n  eta: [0, 0, 0]\n")

    result = runner.invoke(app, ["fit-coeffs", "--config", str(document), "--out", "out"])

    assert result.exit_code == 0, result.output
    fitted = json.loads((tmp_path / "out" / "coefficients.json").read_text(encoding="utf-8"))
    assert fitted["pinned"] is True
    assert fitted["a"][0][2] == pytest.approx(1 / (2 * math.pi), rel=1e-10)


def test_fit_coeffs_beyond_h1_is_a_config_error(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "n: 2\n")

    result = runner.invoke(app, ["fit-coeffs", "--config", str(document), "--out", "out"])

    assert result.exit_code == 2
    assert "n=1 only" in result.output


def test_odd_sphere_resolution_is_a_config_error(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "quadrature:\n  sphere: [31, 32]\n")

    result = runner.invoke(app, ["fit-coeffs", "--config", str(document)])

    assert result.exit_code == 2
    assert "even" in result.output


def test_eval_kernel_reports_a_failed_fit(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    def failing(config, sq=None, *, pin=None):
        raise FitError("Coefficient fit is ill-conditioned.", 1e12)

    monkeypatch.setattr("koranyi.cli.commands.eval_kernel.fit_for_config", failing)
    result = runner.invoke(app, ["eval-kernel", "--out", "out"])

    assert result.exit_code == 1
    assert "Coefficient fit failed" in result.output


def test_eval_kernel_refuses_pinned_coefficients_for_another_pole(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    pinned = _document(tmp_path, "series:\n  M: 0\n  K: 0\n  eta: [0, 0, 0]\n")
    fitted = runner.invoke(app, ["fit-coeffs", "--config", str(pinned), "--out", "out"])
    assert fitted.exit_code == 0

    coefficients = tmp_path / "out" / "coefficients.json"
    result = runner.invoke(app, ["eval-kernel", "--coeffs", str(coefficients), "--out", "out"])

    assert result.exit_code == 2
    assert "pole e only" in result.output


def test_solve_reports_numerical_failures(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    def failing(*args, **kwargs):
        raise RegimeError("Kelvin series needs N(eta) N(xi) < 1.")

    monkeypatch.setattr("koranyi.cli.commands.solve.solve_via_bie", failing)
    result = runner.invoke(app, ["solve", "--method", "bie", "--out", "out"])

    assert result.exit_code == 1
    assert "Solve failed" in result.output
    assert not (tmp_path / "out" / "solution.json").exists()


def test_eval_kernel_at_the_pole_fails(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["eval-kernel", "--out", "out", "--point", "0.3,0,0.1"])

    assert result.exit_code == 1
    assert "Cannot evaluate the kernel" in result.output


def test_eval_kernel_rejects_malformed_points(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)

    result = runner.invoke(app, ["eval-kernel", "--point", "0.3,0"])

    assert result.exit_code != 0


@pytest.mark.slow
def test_solve_both_methods_writes_artifacts(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    document = _document(tmp_path, "solve:\n  probes: [2, 3, 3]\n")

    result = runner.invoke(
        app, ["solve", "--config", str(document), "--method", "both", "--out", "out"]
    )

    assert result.exit_code == 0, result.output
    solution = json.loads((tmp_path / "out" / "solution.json").read_text(encoding="utf-8"))
    assert solution["passed"] is True
    assert set(solution["reports"]) == {"kernel", "bie"}
    assert solution["cross_method_deviation"] <= 1e-2
    assert (tmp_path / "out" / "probes-kernel.csv").is_file()
    assert (tmp_path / "out" / "probes-bie.csv").is_file()
