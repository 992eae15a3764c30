"""JSON encoding of complex matrices as nested ``[re, im]`` pairs."""
from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

from .errors import ConfigError


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data, path: str = "") -> np.ndarray:
    """Decode a matrix; real scalars are accepted in place of ``[re, im]``."""
    try:
        rows = []
        for row in data:
            out = []
            for z in row:
                if isinstance(z, (list, tuple)):
                    if len(z) != 2:
                        raise ValueError("complex entries must be [re, im] pairs")
                    out.append(complex(float(z[0]), float(z[1])))
                else:
                    out.append(complex(float(z), 0.0))
            rows.append(out)
        arr = np.array(rows, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"malformed matrix ({exc})") from None
    if arr.ndim != 2:
        raise ConfigError(path, "matrix rows have inconsistent lengths")
    return arr


def vector_to_json(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=np.complex128)]


def vector_from_json(data, path: str = "") -> np.ndarray:
    return matrix_from_json([data], path)[0]


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def input_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode()).hexdigest()


def to_jsonable(obj: Any) -> Any:
    """Recursively turn numpy scalars/arrays into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            if obj.ndim == 2:
                return matrix_to_json(obj)
            if obj.ndim == 1:
                return vector_to_json(obj)
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj
