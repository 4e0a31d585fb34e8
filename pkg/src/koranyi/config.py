from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from koranyi.heisenberg import StencilParams


class ConfigError(ValueError):
    """Raised when a run document has unknown keys, wrong types or out-of-range values."""

    def __init__(self, path: Path | str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class QuadratureConfig:
    sphere: tuple[int, int]
    ball: tuple[int, int, int]
    ray: tuple[int, int, int]
    theta_nodes: int


@dataclass(frozen=True)
class SeriesConfig:
    M: int
    K: int
    fit_pairs: int
    ratio: float
    eta: tuple[float, float, float]  # re z, im z, t of the pole used for kernel checks


@dataclass(frozen=True)
class ToleranceConfig:
    compat: float
    fit_residual: float
    interior_residual: float
    boundary_residual: float
    solution_error: float
    cross_method: float
    commutator: float
    harmonicity: float
    averaged_kernel: float
    flux: float
    jump: float
    spectral_small: float
    spectral_gap: float
    green: float
    closed_form: float
    neumann_boundary: float


@dataclass(frozen=True)
class ProblemConfig:
    name: str  # builtin name or "custom"
    f: str | None
    g: str | None
    exact: str | None


@dataclass(frozen=True)
class SolveConfig:
    method: str  # "kernel" | "bie" | "both"
    diag_rule: str  # "punctured" | "corrected"
    probes: tuple[int, int, int]


@dataclass(frozen=True)
class RunConfig:
    n: int
    seed: int
    char_threshold: float
    stencil: StencilParams
    quadrature: QuadratureConfig
    series: SeriesConfig
    tolerances: ToleranceConfig
    problem: ProblemConfig
    solve: SolveConfig
    output_dir: Path


_METHODS = {"kernel", "bie", "both"}
_DIAG_RULES = {"punctured", "corrected"}
_STENCIL_ORDERS = {2, 4}


_DEFAULT_TOLERANCES = {
    "compat": 1e-3,
    "fit_residual": 1e-4,
    "interior_residual": 1e-1,
    "boundary_residual": 1e-1,
    "solution_error": 5e-2,
    "cross_method": 1e-2,
    "commutator": 1e-6,
    "harmonicity": 1e-4,
    "averaged_kernel": 1e-8,
    "flux": 1e-3,
    "jump": 5e-2,
    "spectral_small": 1e-3,
    "spectral_gap": 1e-1,
    "green": 1e-3,
    "closed_form": 1e-6,
    "neumann_boundary": 1e-3,
}


def _default_config_data() -> dict[str, Any]:
    return {
        "n": 1,
        "seed": 0,
        "char_threshold": 1e-6,
        "stencil": {"h": 1e-3, "order": 4},
        "quadrature": {
            "sphere": [32, 32],
            "ball": [12, 24, 24],
            "ray": [10, 16, 16],
            "theta_nodes": 256,
        },
        "series": {"M": 6, "K": 6, "fit_pairs": 600, "ratio": 0.5, "eta": [0.3, 0.0, 0.1]},
        "tolerances": dict(_DEFAULT_TOLERANCES),
        "problem": {"name": "t-flux", "f": None, "g": None, "exact": None},
        "solve": {"method": "kernel", "diag_rule": "corrected", "probes": [4, 4, 5]},
        "output": {"dir": "koranyi-out"},
    }


# Leaf descriptors: ("int", minimum), ("float", exclusive minimum), ("enum", allowed),
# ("enum_int", allowed), ("str", None), ("opt_str", None), ("list_int", (length, minimum)),
# ("list_float", length).
_CONFIG_SCHEMA: Mapping[str, Any] = {
    "n": ("int", 1),
    "seed": ("int", 0),
    "char_threshold": ("float", 0.0),
    "stencil": {"h": ("float", 0.0), "order": ("enum_int", _STENCIL_ORDERS)},
    "quadrature": {
        "sphere": ("list_int", (2, 8)),
        "ball": ("list_int", (3, 4)),
        "ray": ("list_int", (3, 4)),
        "theta_nodes": ("int", 8),
    },
    "series": {
        "M": ("int", 0),
        "K": ("int", 0),
        "fit_pairs": ("int", 12),
        "ratio": ("float", 0.0),
        "eta": ("list_float", 3),
    },
    "tolerances": {key: ("float", 0.0) for key in _DEFAULT_TOLERANCES},
    "problem": {
        "name": ("str", None),
        "f": ("opt_str", None),
        "g": ("opt_str", None),
        "exact": ("opt_str", None),
    },
    "solve": {
        "method": ("enum", _METHODS),
        "diag_rule": ("enum", _DIAG_RULES),
        "probes": ("list_int", (3, 1)),
    },
    "output": {"dir": ("str", None)},
}


def render_default_config_yaml() -> str:
    """Render the default run document for users to copy and edit."""

    # `sort_keys=False` keeps dict insertion order for stable diffs.
    return yaml.safe_dump(_default_config_data(), sort_keys=False).strip() + "\n"


def write_if_missing(path: Path, content: str) -> bool:
    if path.exists():
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    return True


def ensure_global_config() -> bool:
    """Ensure `~/.koranyi/config.yaml` exists (creates defaults if missing)."""

    return write_if_missing(global_config_path(), render_default_config_yaml())


def load_config(path: Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Load the run configuration.

    Precedence:
      built-in defaults < ~/.koranyi/config.yaml < --config document < CLI overrides
    JSON documents are read through the YAML loader.
    """

    merged = _default_config_data()
    merged = _deep_merge(merged, _load_and_validate_yaml(global_config_path()))
    if path is not None:
        if not path.exists():
            raise ConfigError(path, "Config file does not exist.")
        merged = _deep_merge(merged, _load_and_validate_yaml(path))
    if overrides:
        override_data = dict(overrides)
        _validate_config_dict(override_data, _CONFIG_SCHEMA, "<command line>")
        merged = _deep_merge(merged, override_data)
    return _build_config(merged, path or "<defaults>")


def _build_config(data: Mapping[str, Any], source: Path | str) -> RunConfig:
    if data["series"]["ratio"] >= 1:
        raise ConfigError(source, "Expected 'series.ratio' to be below 1.")
    if data["quadrature"]["sphere"][0] % 2:
        raise ConfigError(source, "Expected an even φ count in 'quadrature.sphere'.")
    problem = data["problem"]
    if problem["name"] == "custom" and (problem["f"] is None or problem["g"] is None):
        raise ConfigError(source, "Custom problems need 'problem.f' and 'problem.g'.")
    output_dir = Path(data["output"]["dir"])
    quadrature = data["quadrature"]
    return RunConfig(
        n=int(data["n"]),
        seed=int(data["seed"]),
        char_threshold=float(data["char_threshold"]),
        stencil=StencilParams(h=float(data["stencil"]["h"]), order=int(data["stencil"]["order"])),
        quadrature=QuadratureConfig(
            sphere=tuple(quadrature["sphere"]),
            ball=tuple(quadrature["ball"]),
            ray=tuple(quadrature["ray"]),
            theta_nodes=int(quadrature["theta_nodes"]),
        ),
        series=SeriesConfig(
            M=int(data["series"]["M"]),
            K=int(data["series"]["K"]),
            fit_pairs=int(data["series"]["fit_pairs"]),
            ratio=float(data["series"]["ratio"]),
            eta=tuple(float(v) for v in data["series"]["eta"]),
        ),
        tolerances=ToleranceConfig(**{k: float(v) for k, v in data["tolerances"].items()}),
        problem=ProblemConfig(
            name=str(problem["name"]),
            f=problem["f"],
            g=problem["g"],
            exact=problem["exact"],
        ),
        solve=SolveConfig(
            method=str(data["solve"]["method"]),
            diag_rule=str(data["solve"]["diag_rule"]),
            probes=tuple(data["solve"]["probes"]),
        ),
        output_dir=output_dir,
    )


def global_config_path() -> Path:
    # Use expanduser so callers/tests can control via HOME.
    return Path(os.path.expanduser("~")) / ".koranyi" / "config.yaml"


def _load_and_validate_yaml(path: Path) -> dict[str, Any]:
    if not path.exists():
        return {}

    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return {}

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"Could not parse document: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(path, "Top-level value must be a mapping.")

    _validate_config_dict(data, _CONFIG_SCHEMA, path)
    return data


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _validate_config_dict(
    data: Mapping[str, Any],
    schema: Mapping[str, Any],
    file_path: Path | str,
    *,
    dot_path_prefix: str = "",
) -> None:
    for key, value in data.items():
        dotted = f"{dot_path_prefix}.{key}" if dot_path_prefix else str(key)
        if key not in schema:
            raise ConfigError(file_path, f"Unknown config key '{dotted}'.")

        expected = schema[key]
        if isinstance(expected, Mapping):
            if not isinstance(value, Mapping):
                raise ConfigError(file_path, f"Expected '{dotted}' to be a mapping.")
            _validate_config_dict(value, expected, file_path, dot_path_prefix=dotted)
            continue

        # Leaf type descriptors:
        expected_kind, argument = expected
        if expected_kind == "enum":
            if not isinstance(value, str) or value not in argument:
                raise ConfigError(
                    file_path, f"Expected '{dotted}' to be one of {sorted(argument)}."
                )
            continue

        if expected_kind == "enum_int":
            if isinstance(value, bool) or value not in argument:
                raise ConfigError(
                    file_path, f"Expected '{dotted}' to be one of {sorted(argument)}."
                )
            continue

        if expected_kind == "int":
            if not isinstance(value, int) or isinstance(value, bool) or value < argument:
                raise ConfigError(
                    file_path, f"Expected '{dotted}' to be an integer ≥ {argument}."
                )
            continue

        if expected_kind == "float":
            if not _is_number(value) or value <= argument:
                raise ConfigError(file_path, f"Expected '{dotted}' to be a number > {argument}.")
            continue

        if expected_kind == "str":
            if not isinstance(value, str):
                raise ConfigError(file_path, f"Expected '{dotted}' to be a string.")
            continue

        if expected_kind == "opt_str":
            if value is not None and not isinstance(value, str):
                raise ConfigError(file_path, f"Expected '{dotted}' to be a string or null.")
            continue

        if expected_kind == "list_int":
            length, minimum = argument
            if (
                not isinstance(value, list)
                or len(value) != length
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
                or min(value) < minimum
            ):
                raise ConfigError(
                    file_path,
                    f"Expected '{dotted}' to be a list of {length} integers ≥ {minimum}.",
                )
            continue

        if expected_kind == "list_float":
            if not isinstance(value, list) or len(value) != argument or not all(
                _is_number(v) for v in value
            ):
                raise ConfigError(
                    file_path, f"Expected '{dotted}' to be a list of {argument} numbers."
                )
            continue

        raise ConfigError(file_path, f"Internal error: unknown schema kind for '{dotted}'.")


def _deep_merge(base: dict[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Deep merge dicts where:
    - mappings are merged recursively
    - scalars and lists are replaced
    """

    result: dict[str, Any] = dict(base)
    for key, override_value in override.items():
        base_value = result.get(key)
        if isinstance(base_value, dict) and isinstance(override_value, Mapping):
            result[key] = _deep_merge(base_value, override_value)
        else:
            result[key] = override_value
    return result
