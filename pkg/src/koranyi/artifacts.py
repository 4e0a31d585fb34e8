from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

FLOAT_DIGITS = 12
PROBE_HEADER = ("z_re", "z_im", "t", "value")
RESIDUAL_HEADER = ("residual_interior", "residual_boundary")


def _normalize(value: Any) -> Any:
    """Plain JSON values with floats rounded to FLOAT_DIGITS significant digits."""
    if isinstance(value, Mapping):
        return {str(key): _normalize(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return [_normalize(item) for item in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_normalize(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if not math.isfinite(number):
            return None
        rounded = float(f"{number:.{FLOAT_DIGITS}g}")
        return 0.0 if rounded == 0 else rounded
    if isinstance(value, Path):
        return value.as_posix()
    return value


def render_json(document: Mapping[str, Any]) -> str:
    return json.dumps(_normalize(document), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, document: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_json(document), encoding="utf-8")
    return path


def read_json(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))


def _format_cell(value: float) -> str:
    return f"{float(value):.{FLOAT_DIGITS}g}"


def write_probe_csv(
    path: Path,
    rows: Iterable[Sequence[float]],
    residuals: Sequence[tuple[float, float]] | None = None,
) -> Path:
    """Probe dump with the fixed header; residual columns only when given."""
    header = PROBE_HEADER + (RESIDUAL_HEADER if residuals is not None else ())
    rows = list(rows)
    if residuals is not None and len(residuals) != len(rows):
        raise ValueError(f"Expected {len(rows)} residual pairs, got {len(residuals)}.")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for index, row in enumerate(rows):
            cells = [_format_cell(v) for v in row]
            if residuals is not None:
                cells.extend(_format_cell(v) for v in residuals[index])
            writer.writerow(cells)
    return path
