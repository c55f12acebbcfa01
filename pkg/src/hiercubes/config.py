"""Reading model/profile documents and writing deterministic JSON and CSV."""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .core import ConstantEnergyModel, EnergyModel, LatticeParams, TableModel
from .density import DensityProfile
from .errors import ConfigError, InvalidProfile


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("hiercubes").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{name} document invalid at {where}: {exc.message}") from None


def read_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _number(x):
    if x == "inf":
        return math.inf
    return x


def _table_entry(x):
    # exact rationals may be given as "p/q" strings
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot read activity {x!r}") from None
    return x


def model_from_dict(doc: dict):
    """``(LatticeParams, ActivityModel)`` from a validated model document."""
    validate(doc, "model")
    params = LatticeParams(doc["d"])
    body = doc["model"]
    kind = body["type"]
    if kind == "table":
        model = TableModel(tuple(_table_entry(x) for x in body["z"]))
    elif kind == "energy":
        model = EnergyModel(tuple(_number(x) for x in body["E"]), float(body["e_inf"]), float(body["mu"]))
    else:
        model = ConstantEnergyModel(float(body["lambda"]), float(body["mu"]))
    return params, model


def model_to_dict(params: LatticeParams, model) -> dict:
    if isinstance(model, TableModel):
        body = {"type": "table", "z": [str(x) if isinstance(x, Fraction) else x for x in model.z]}
    elif isinstance(model, EnergyModel):
        body = {"type": "energy", "E": ["inf" if x == math.inf else x for x in model.E],
                "e_inf": model.e_inf, "mu": model.mu}
    else:
        body = {"type": "constant_energy", "lambda": model.lam, "mu": model.mu}
    return {"d": params.d, "model": body}


def profile_from_dict(doc: dict):
    """``(LatticeParams, DensityProfile)`` from a validated profile document."""
    validate(doc, "profile")
    params = LatticeParams(doc["d"])
    body = doc["profile"]
    try:
        profile = DensityProfile.from_rho(body["rho"], body.get("sigma_inf", 0.0))
    except InvalidProfile as exc:
        raise ConfigError(f"invalid profile: {exc}") from None
    return params, profile


def jsonable(x):
    """Recursively replace non-finite floats by strings and tuples by lists."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return jsonable(x.item())
    return x


def dumps_json(doc) -> str:
    return json.dumps(jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(header: list[str], rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else jsonable(v)
    return v
