"""Deterministic writers: CSV with a header row, comma separator and LF
line endings; structured summaries as JSON."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import SystemState
from .policy.types import CostBreakdown, StationarySample

__all__ = ["format_value", "write_csv", "write_json", "write_stationary_states", "breakdown_summary"]


def format_value(v) -> str:
    """Shortest round-trip text for floats; blank for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        return repr(f)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) else f
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2) + "\n")
    return path


def write_stationary_states(path, pi: StationarySample) -> Path:
    """One row per cloud state: state_id, n_processes, w_1..w_K (right padded)."""
    K = max((s.n for s in pi.states), default=0)
    header = ["state_id", "n_processes"] + [f"w_{i + 1}" for i in range(K)]
    rows = ([i, s.n] + list(s.levels) + [None] * (K - s.n) for i, s in enumerate(pi.states))
    return write_csv(path, header, rows)


def breakdown_summary(bd: CostBreakdown) -> dict:
    return bd.as_dict()
