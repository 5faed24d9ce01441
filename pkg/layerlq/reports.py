from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from layerlq import config
from layerlq.services.simulate import SimulationTrace


def jsonable(obj: Any) -> Any:
    """numpy scalars/arrays to plain Python; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def dumps(payload: Any) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True)


def write_json(payload: Any, path: Path | str) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload) + "\n", encoding="utf-8")
    return path


def error_payload(err) -> dict:
    return {"schema_version": config.SCHEMA_VERSION, **err.to_dict()}


# ------------------------------------------------------------------------------
# CSV
# ------------------------------------------------------------------------------
def trace_frame(trace: SimulationTrace) -> pd.DataFrame:
    """Columns t, x_0..x_{n-1}, u_0..u_{p-1}, J."""
    n, p = trace.states.shape[1], trace.inputs.shape[1]
    frame = pd.DataFrame(trace.states, columns=[f"x_{i}" for i in range(n)])
    for k in range(p):
        frame[f"u_{k}"] = trace.inputs[:, k]
    frame.insert(0, "t", trace.times)
    frame["J"] = trace.running_cost
    return frame


def write_trace_csv(trace: SimulationTrace, path: Path | str) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(trace).to_csv(path, index=False, float_format="%.10g")
    return path


def write_table_csv(rows: list[dict], path: Path | str) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.6g")
    return path
