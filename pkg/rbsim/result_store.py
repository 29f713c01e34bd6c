"""
Flat-file result persistence: curve/table CSVs, JSON sidecars and a run index.

CSV files start with two comment lines (generation time, config digest); the
timestamp line is the only part that changes between identical reruns.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .analytic import CurveMethod, DecayCurve
from .errors import ConfigError

CURVE_COLUMNS = ("m", "t_over_tg", "p0", "stderr", "method")

PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def write_table_csv(
    path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]], digest: str
) -> Path:
    path = Path(path)
    with _open_for_write(path) as f:
        f.write(f"# generated_at={datetime.now(timezone.utc).isoformat()}\n")
        f.write(f"# config_digest={digest}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_curve_csv(curve: DecayCurve, path: PathLike, digest: str = "", t_g: float = 1.0) -> Path:
    rows = [
        (int(m), float(m) * t_g, float(p), float(s), curve.method.value)
        for m, p, s in zip(curve.lengths, curve.p0, curve.stderr)
    ]
    return write_table_csv(path, CURVE_COLUMNS, rows, digest or curve.config_digest)


def read_table_csv(path: PathLike) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            lines = [line for line in f if not line.startswith("#")]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return list(csv.DictReader(lines))


def read_curve_csv(path: PathLike) -> DecayCurve:
    rows = read_table_csv(path)
    if not rows or any(c not in rows[0] for c in ("m", "p0")):
        raise ConfigError(f"{path} is not a curve CSV (needs columns m, p0)")
    method = rows[0].get("method") or CurveMethod.MONTECARLO.value
    return DecayCurve(
        lengths=[int(r["m"]) for r in rows],
        p0=[float(r["p0"]) for r in rows],
        stderr=[float(r.get("stderr") or 0.0) for r in rows],
        method=method,
    )


def body_without_timestamp(path: PathLike) -> str:
    """CSV text minus the generated_at line; identical configs give identical bodies."""
    with open(path, "r", encoding="utf-8") as f:
        return "".join(line for line in f if not line.startswith("# generated_at="))


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def write_sidecar(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    with _open_for_write(path) as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)
    return path


# ---------------------------------------------------------------------------
# Run index
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    timestamp: str
    experiment: str
    config_digest: str
    success: bool
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    error_message: str = ""
    id: str = ""


def _runs_dir(out_dir: PathLike) -> Path:
    d = Path(out_dir) / "runs"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _next_id(out_dir: PathLike) -> str:
    t = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = _runs_dir(out_dir) / t
    idx = 0
    while (Path(f"{base}-{idx}.json").exists() if idx else Path(f"{base}.json").exists()):
        idx += 1
    return f"{t}-{idx}" if idx else t


def save_run(record: RunRecord, out_dir: PathLike) -> str:
    if not record.id:
        record.id = _next_id(out_dir)
    path = _runs_dir(out_dir) / f"{record.id}.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(record), f, ensure_ascii=False, indent=2, default=_json_default)
    return record.id


def load_run(out_dir: PathLike, run_id: str) -> Optional[RunRecord]:
    path = _runs_dir(out_dir) / f"{run_id}.json"
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as f:
        return RunRecord(**json.load(f))


def list_runs(out_dir: PathLike, limit: int = 100) -> List[RunRecord]:
    files = sorted(_runs_dir(out_dir).glob("*.json"), key=os.path.getmtime, reverse=True)
    records = []
    for p in files[:limit]:
        try:
            with open(p, "r", encoding="utf-8") as f:
                records.append(RunRecord(**json.load(f)))
        except (OSError, json.JSONDecodeError, TypeError):
            continue
    return records


def delete_run(out_dir: PathLike, run_id: str) -> bool:
    path = _runs_dir(out_dir) / f"{run_id}.json"
    if path.exists():
        path.unlink()
        return True
    return False
