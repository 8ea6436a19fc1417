"""Serialization shared by all report and certificate types."""

import csv
import dataclasses
import io
import json
import math

import numpy as np

TOOL_VERSION = "0.1.0"


def to_plain(obj):
    """Recursively convert dataclasses / numpy values to JSON-ready Python."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no NaN/Inf
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    """Stable JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(to_plain(obj), sort_keys=True, indent=2) + "\n"


class ReportMixin:
    """``to_dict`` / ``to_json`` for report dataclasses."""

    def to_dict(self) -> dict:
        return to_plain(self)

    def to_json(self) -> str:
        return dumps(self)


def series_csv(columns: dict) -> str:
    """CSV text with one column per key; all columns must have equal length."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
