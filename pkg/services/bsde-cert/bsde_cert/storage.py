from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from pydantic import BaseModel

from . import __version__
from .ensemble import DiscreteSolution
from .errors import CertError

logger = logging.getLogger(__name__)

FIXED_TIMESTAMP = "1970-01-01T00:00:00+00:00"
PathLike = Union[str, Path]


@dataclass
class ReportMeta:
    seed: int
    version: str = __version__
    timestamp: str = FIXED_TIMESTAMP

    @staticmethod
    def now(seed: int, fixed_timestamp: bool = False) -> "ReportMeta":
        stamp = FIXED_TIMESTAMP if fixed_timestamp else datetime.now(timezone.utc).isoformat()
        return ReportMeta(seed=seed, timestamp=stamp)

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(data: dict) -> "ReportMeta":
        return ReportMeta(
            seed=int(data["seed"]),
            version=data.get("version", __version__),
            timestamp=data.get("timestamp", FIXED_TIMESTAMP),
        )


def _flatten(payload: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, list):
            flat[name] = json.dumps(value)
        else:
            flat[name] = value
    return flat


# strict JSON has no literal for these
_NON_FINITE = {"Infinity": math.inf, "-Infinity": -math.inf, "NaN": math.nan}


def _encode_non_finite(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "NaN"
        return "Infinity" if value > 0 else "-Infinity"
    if isinstance(value, dict):
        return {key: _encode_non_finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode_non_finite(item) for item in value]
    return value


def _decode_non_finite(value: Any) -> Any:
    if isinstance(value, str):
        return _NON_FINITE.get(value, value)
    if isinstance(value, dict):
        return {key: _decode_non_finite(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_decode_non_finite(item) for item in value]
    return value


def render_json(reports: Sequence[BaseModel], meta: ReportMeta) -> str:
    payload = {"meta": meta.to_json(), "reports": [report.model_dump() for report in reports]}
    return json.dumps(_encode_non_finite(payload), indent=2, allow_nan=False) + "\n"


def render_csv(reports: Sequence[BaseModel]) -> str:
    rows = [_flatten(report.model_dump()) for report in reports]
    fieldnames: List[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def emit_report(
    reports: Sequence[BaseModel],
    path: PathLike,
    fmt: str = "json",
    *,
    seed: int,
    fixed_timestamp: bool = False,
) -> Path:
    path = Path(path)
    if fmt == "json":
        text = render_json(reports, ReportMeta.now(seed, fixed_timestamp))
    elif fmt == "csv":
        text = render_csv(reports)
    else:
        raise CertError(f"Unknown report format '{fmt}'.", error_code="invalid_format")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CertError(f"Could not write report to '{path}': {exc}", error_code="io_error") from exc
    logger.info("Wrote %d report(s) to %s", len(reports), path)
    return path


def read_report(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        return _decode_non_finite(json.loads(path.read_text(encoding="utf-8")))
    except OSError as exc:
        raise CertError(f"Could not read report '{path}': {exc}", error_code="io_error") from exc
    except json.JSONDecodeError as exc:
        raise CertError(f"Report '{path}' is not valid JSON: {exc}", error_code="io_error") from exc


def solution_fieldnames(k_dim: int, d_dim: int) -> List[str]:
    names = ["path", "time"]
    names.extend(f"y{l}" for l in range(k_dim))
    names.extend(f"z{j}_{l}" for j in range(d_dim) for l in range(k_dim))
    return names


def dump_solution(sol: DiscreteSolution, path: PathLike) -> Path:
    """Columnar CSV: one row per (path, time); Z columns are empty at the terminal time."""
    path = Path(path)
    k, d = sol.k_dim, sol.d_dim
    fieldnames = solution_fieldnames(k, d)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fieldnames)
            for p in range(sol.n_paths):
                for i, t in enumerate(sol.times):
                    row: List[Any] = [p, repr(float(t))]
                    row.extend(repr(float(v)) for v in sol.y_grid[p, i, :])
                    if i < sol.n_steps:
                        row.extend(repr(float(v)) for v in sol.z_grid[p, i].reshape(-1))
                    else:
                        row.extend("" for _ in range(d * k))
                    writer.writerow(row)
    except OSError as exc:
        raise CertError(f"Could not write solution to '{path}': {exc}", error_code="io_error") from exc
    logger.info("Dumped %d paths x %d times to %s", sol.n_paths, sol.n_steps + 1, path)
    return path
