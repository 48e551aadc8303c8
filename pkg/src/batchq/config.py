"""JSON model files.

Schema::

    {"rate": {...}, "service": {...}, "batch": {...}, "horizon": number,
     "within_batch": "iid" | "identical"}

``dumps(loads(text))`` yields the canonical form, and canonical text is a
fixed point of that round trip.
"""

from __future__ import annotations

import hashlib
import json

from .curves import Curve
from .errors import ModelError
from .model import BatchLaw, MarkLaw, ModelSpec, ServiceFamily, validate


def _req(obj, key, field):
    if not isinstance(obj, dict):
        raise ModelError("expected an object", field)
    if key not in obj:
        raise ModelError("missing required key", f"{field}.{key}")
    return obj[key]


def _num(v, field):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelError("expected a number", field)
    return float(v)


def _service(obj, field="service"):
    kind = _req(obj, "kind", field)
    if kind == "exponential":
        return ServiceFamily.exponential(Curve.from_config(_req(obj, "rate", field), f"{field}.rate"))
    if kind == "deterministic":
        return ServiceFamily.deterministic(Curve.from_config(_req(obj, "value", field), f"{field}.value"))
    if kind == "uniform":
        return ServiceFamily.uniform(Curve.from_config(_req(obj, "low", field), f"{field}.low"),
                                     Curve.from_config(_req(obj, "high", field), f"{field}.high"))
    if kind == "hyperexponential":
        w = [_num(x, f"{field}.weights") for x in _req(obj, "weights", field)]
        r = [Curve.from_config(x, f"{field}.rates") for x in _req(obj, "rates", field)]
        return ServiceFamily.hyperexponential(w, r)
    if kind == "empirical":
        return ServiceFamily.empirical([_num(x, f"{field}.sample") for x in _req(obj, "sample", field)])
    raise ModelError(f"unknown service kind {kind!r}", f"{field}.kind")


def _mark(obj, field="batch.mark"):
    kind = _req(obj, "kind", field)
    if kind == "point":
        return MarkLaw("point", (_num(_req(obj, "value", field), f"{field}.value"),))
    if kind == "uniform":
        return MarkLaw("uniform", (_num(_req(obj, "low", field), f"{field}.low"),
                                   _num(_req(obj, "high", field), f"{field}.high")))
    if kind == "exponential":
        return MarkLaw("exponential", (_num(_req(obj, "rate", field), f"{field}.rate"),))
    if kind == "quantile":
        probs = tuple(_num(x, f"{field}.probs") for x in _req(obj, "probs", field))
        vals = tuple(_num(x, f"{field}.values") for x in _req(obj, "values", field))
        return MarkLaw("quantile", (probs, vals))
    raise ModelError(f"unknown mark kind {kind!r}", f"{field}.kind")


def _int(v, field):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ModelError("expected an integer", field)
    return int(v)


def _batch(obj, field="batch"):
    kind = _req(obj, "kind", field)
    mark = _mark(obj["mark"], f"{field}.mark") if isinstance(obj, dict) and "mark" in obj else None
    if kind == "deterministic":
        law = BatchLaw.deterministic(_int(_req(obj, "size", field), f"{field}.size"))
    elif kind == "geometric":
        law = BatchLaw.geometric(Curve.from_config(_req(obj, "p", field), f"{field}.p"))
    elif kind == "zeta":
        law = BatchLaw.zeta(_num(_req(obj, "exponent", field), f"{field}.exponent"),
                            _int(_req(obj, "max_size", field), f"{field}.max_size"))
    elif kind == "table":
        pmf = _req(obj, "pmf", field)
        if not isinstance(pmf, dict):
            raise ModelError("expected an object mapping sizes to masses", f"{field}.pmf")
        try:
            law = BatchLaw.table({int(k): _num(v, f"{field}.pmf") for k, v in pmf.items()})
        except ValueError:
            raise ModelError("sizes must be integers", f"{field}.pmf") from None
    elif kind == "piecewise":
        bp = [_num(x, f"{field}.breakpoints") for x in _req(obj, "breakpoints", field)]
        laws = [_batch(x, f"{field}.laws[{i}]") for i, x in enumerate(_req(obj, "laws", field))]
        law = BatchLaw.piecewise(bp, laws)
    else:
        raise ModelError(f"unknown batch kind {kind!r}", f"{field}.kind")
    return law.with_mark(mark) if mark is not None else law


def from_dict(obj) -> ModelSpec:
    """Build a model from a parsed config object (schema errors raise ModelError)."""
    if not isinstance(obj, dict):
        raise ModelError("top level must be an object", "model")
    rate = Curve.from_config(_req(obj, "rate", "model"), "rate")
    service = _service(_req(obj, "service", "model"))
    batch = _batch(obj.get("batch", {"kind": "deterministic", "size": 1}))
    horizon = _num(_req(obj, "horizon", "model"), "horizon")
    wb = obj.get("within_batch", "iid")
    if wb not in ("iid", "identical"):
        raise ModelError("must be 'iid' or 'identical'", "within_batch")
    return ModelSpec(rate=rate, service=service, batch=batch, horizon=horizon, within_batch=wb)


def to_dict(model: ModelSpec) -> dict:
    if callable(model.within_batch):
        raise ModelError("models with a custom batch sampler cannot be serialized", "within_batch")
    return {
        "rate": model.rate.to_dict(),
        "service": model.service.to_dict(),
        "batch": model.batch.to_dict(),
        "horizon": model.horizon,
        "within_batch": model.within_batch,
    }


def dumps(model: ModelSpec) -> str:
    """Canonical JSON text (sorted keys, fixed separators, float reprs)."""
    return json.dumps(_floats(to_dict(model)), sort_keys=True, separators=(",", ":"))


def _floats(obj):
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floats(v) for v in obj]
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return obj if isinstance(obj, int) else float(obj)
    return obj


def loads(text: str, check: bool = True) -> ModelSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "model") from None
    model = from_dict(obj)
    if check:
        problems = validate(model)
        if problems:
            err = ModelError("; ".join(problems))
            err.field = problems[0].split(":")[0]
            raise err
    return model


def load(path, check: bool = True) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), check=check)


def model_hash(model: ModelSpec) -> str:
    """First 16 hex digits of the SHA-256 of the canonical form."""
    try:
        text = dumps(model)
    except ModelError:
        text = repr(model)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
