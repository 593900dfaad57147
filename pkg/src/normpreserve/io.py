"""File formats: JSON for structured objects, CSV for sample matrices.

Sample CSVs have one point per row, no header, 17 significant digits, so a
write/read round trip is exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import SchemaError
from .gaussian import AffineMap, GaussianMeasure
from .identity_checks import ClaimPair, PushforwardClaim
from .transform import PiecewiseSignOrthogonal

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_bound = {"anyOf": [{"type": "number"}, {"const": "inf"}]}

TRANSFORM_SCHEMA = {
    "type": "object",
    "required": ["U", "V", "partition"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "U": _matrix,
        "V": _matrix,
        "partition": {
            "type": "object",
            "required": ["coords"],
            "properties": {
                "coords": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["plus_intervals"],
                        "properties": {
                            "plus_intervals": {
                                "type": "array",
                                "items": {"type": "array", "items": _bound, "minItems": 2, "maxItems": 2},
                            }
                        },
                    },
                }
            },
        },
        "sigma0_sqrt": _matrix,
        "psi0_sqrt": _matrix,
        "sigmas": {"type": "array", "items": _matrix},
    },
}

AFFINE_SCHEMA = {
    "type": "object",
    "required": ["A", "a"],
    "properties": {"A": _matrix, "a": _vector},
}

GAUSSIAN_SCHEMA = {
    "type": "object",
    "required": ["mean", "cov"],
    "properties": {"mean": _vector, "cov": _matrix},
}

CLAIM_SCHEMA = {
    "type": "object",
    "required": ["source", "image"],
    "properties": {"source": GAUSSIAN_SCHEMA, "image": GAUSSIAN_SCHEMA},
}

CLAIM_PAIR_SCHEMA = {
    "type": "object",
    "required": ["first", "second"],
    "properties": {"first": CLAIM_SCHEMA, "second": CLAIM_SCHEMA},
}

RECOVER_SCHEMA = {
    "type": "object",
    "required": ["mode", "datasets"],
    "properties": {
        "mode": {"enum": ["affine", "piecewise"]},
        "datasets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["source", "samples"],
                "properties": {"source": GAUSSIAN_SCHEMA, "samples": {"type": "string"}},
            },
        },
        "identity": {
            "type": "object",
            "required": ["samples"],
            "properties": {"samples": {"type": "string"}},
        },
    },
}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path)


def validate(doc, schema, source=None):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, source=source, pointer=_pointer(exc.absolute_path)) from None


def read_json(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SchemaError("file not found", source=str(path)) from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", source=str(path), pointer=f"line {exc.lineno}") from None


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_transform(path):
    """Load a piecewise (``.gpt.json``) or affine (``{"A", "a"}``) transform."""
    doc = read_json(path)
    return parse_transform(doc, source=str(path))


def parse_transform(doc, source=None):
    if isinstance(doc, dict) and "A" in doc:
        validate(doc, AFFINE_SCHEMA, source)
        return AffineMap.from_dict(doc)
    validate(doc, TRANSFORM_SCHEMA, source)
    return PiecewiseSignOrthogonal.from_dict(doc)


def load_gaussian(doc, source=None):
    validate(doc, GAUSSIAN_SCHEMA, source)
    return GaussianMeasure.from_dict(doc)


def load_claim(path):
    doc = read_json(path)
    validate(doc, CLAIM_SCHEMA, str(path))
    return PushforwardClaim.from_dict(doc)


def load_claim_pair(path):
    doc = read_json(path)
    validate(doc, CLAIM_PAIR_SCHEMA, str(path))
    return ClaimPair.from_dict(doc)


def read_csv(path, ncols=None):
    """Read a headerless numeric CSV into an ``(m, k)`` array.

    Every row must have the same number of columns (``ncols`` if given);
    errors name the offending line.
    """
    path = Path(path)
    rows = []
    width = ncols
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise SchemaError("file not found", source=str(path)) from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise SchemaError("non-numeric entry", source=str(path), pointer=f"line {lineno}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise SchemaError(
                    f"expected {width} columns, found {len(vals)}", source=str(path), pointer=f"line {lineno}"
                )
            rows.append(vals)
    if not rows:
        raise SchemaError("no data rows", source=str(path))
    return np.array(rows, dtype=float)


def write_csv(path, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    np.savetxt(path, X, fmt="%.17g", delimiter=",")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
