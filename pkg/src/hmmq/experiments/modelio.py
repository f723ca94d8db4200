"""JSON model files.

A model file is either ``{"preset": NAME, "params": {...}}`` or an explicit
description::

    {"dims": {"d_E": 2, "d_P": 2, "d_A": 1},
     "omega": 0.0,
     "H_EP": [[[re, im], ...], ...],
     "G": ..., "H_E": ..., "jumps": [matrix, ...],
     "env_state": [[re, im], ...]}

Matrix entries are ``[re, im]`` pairs (a bare real number is also accepted).
``H_E``, ``jumps``, ``omega``, ``d_A`` and ``env_state`` are optional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import HmmModel
from .presets import preset


class ModelFileError(ValueError):
    """Malformed model description; the message names the offending location."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    model: HmmModel
    env_state: np.ndarray | None = None


def _entry(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ModelFileError(f"{where}: expected a number or [re, im] pair, got {x!r}")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        return complex(x[0], x[1])
    raise ModelFileError(f"{where}: expected a number or [re, im] pair, got {x!r}")


def parse_matrix(obj, name: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ModelFileError(f"{name}: expected a non-empty list of rows")
    rows = []
    width = None
    for r, row in enumerate(obj):
        if not isinstance(row, list):
            raise ModelFileError(f"{name}: row {r}: expected a list of entries")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ModelFileError(f"{name}: row {r}: has {len(row)} entries, expected {width}")
        rows.append([_entry(x, f"{name}: row {r}, col {c}") for c, x in enumerate(row)])
    return np.array(rows, dtype=complex)


def parse_vector(obj, name: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ModelFileError(f"{name}: expected a non-empty list of entries")
    return np.array([_entry(x, f"{name}: entry {i}") for i, x in enumerate(obj)], dtype=complex)


def matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def vector_to_json(v: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex).reshape(-1)]


def model_from_dict(doc: dict) -> ModelSpec:
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    env = parse_vector(doc["env_state"], "env_state") if "env_state" in doc else None
    if "preset" in doc:
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise ModelFileError("params: expected an object")
        try:
            return ModelSpec(preset(doc["preset"], **params), env)
        except TypeError as exc:
            raise ModelFileError(f"params: {exc}") from exc
    for key in ("dims", "H_EP", "G"):
        if key not in doc:
            raise ModelFileError(f"missing required key {key!r}")
    dims = doc["dims"]
    if not isinstance(dims, dict) or "d_E" not in dims or "d_P" not in dims:
        raise ModelFileError("dims: expected an object with d_E and d_P")
    try:
        d_E, d_P, d_A = int(dims["d_E"]), int(dims["d_P"]), int(dims.get("d_A", 1))
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"dims: {exc}") from exc
    jumps = doc.get("jumps", [])
    if not isinstance(jumps, list):
        raise ModelFileError("jumps: expected a list of matrices")
    try:
        model = HmmModel(
            d_E=d_E, d_P=d_P, d_A=d_A,
            H_EP=parse_matrix(doc["H_EP"], "H_EP"),
            G=parse_matrix(doc["G"], "G"),
            H_E=parse_matrix(doc["H_E"], "H_E") if "H_E" in doc else None,
            jumps=tuple(parse_matrix(j, f"jumps[{k}]") for k, j in enumerate(jumps)),
            omega=float(doc.get("omega", 0.0)),
            name=str(doc.get("name", "")),
        )
    except ModelFileError:
        raise
    except ValueError as exc:
        raise ModelFileError(str(exc)) from exc
    return ModelSpec(model, env)


def model_to_dict(model: HmmModel, env_state=None) -> dict:
    doc = {
        "dims": {"d_E": model.d_E, "d_P": model.d_P, "d_A": model.d_A},
        "omega": model.omega,
        "H_EP": matrix_to_json(model.H_EP),
        "G": matrix_to_json(model.G),
        "H_E": matrix_to_json(model.H_E),
        "jumps": [matrix_to_json(l) for l in model.jumps],
    }
    if model.name:
        doc["name"] = model.name
    if env_state is not None:
        doc["env_state"] = vector_to_json(env_state)
    return doc


def load_model(path) -> ModelSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON at line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
    return model_from_dict(doc)
