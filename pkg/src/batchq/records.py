"""Tabular result records shared by the CLI outputs (CSV and JSON)."""

from __future__ import annotations

import csv
import json
from typing import NamedTuple

FIELDS = ("operation", "model_hash", "seed", "params", "key", "value", "error", "error_type", "status")

# error_type values: "bound" is a certified truncation bound, "quad" the
# quadrature tolerance target, "se" a Monte Carlo standard error, "tol" the
# acceptance tolerance of a check.


class Record(NamedTuple):
    operation: str
    model_hash: str
    seed: object
    params: str
    key: str
    value: float
    error: float
    error_type: str
    status: str = "ok"


def canonical_params(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def _num(v):
    if isinstance(v, float):
        return repr(float(v))
    return v


def _plain(v):
    if isinstance(v, float):
        return float(v)
    if hasattr(v, "item"):
        return v.item()
    return v


def write_records(fh, records, fmt: str = "csv"):
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([_num(v) for v in r])
    elif fmt == "json":
        json.dump([{k: _plain(v) for k, v in r._asdict().items()} for r in records], fh, sort_keys=True, indent=1)
        fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
