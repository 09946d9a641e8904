"""Deterministic JSON writing: sorted keys, floats at 17 significant digits, named infinities."""
import hashlib
import json
import math
from typing import Any

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def _float(o: float) -> str:
    if math.isnan(o):
        return '"nan"'
    if math.isinf(o):
        return '"inf"' if o > 0 else '"-inf"'
    s = format(o, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(o: Any) -> str:
    if o is None or isinstance(o, (bool, str)):
        return json.dumps(o)
    if isinstance(o, int):
        return str(o)
    if isinstance(o, float):
        return _float(o)
    if isinstance(o, dict):
        items = sorted((str(k), v) for k, v in o.items())
        return "{" + ",".join(json.dumps(k) + ":" + dumps(v) for k, v in items) + "}"
    if isinstance(o, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in o) + "]"
    if hasattr(o, "tolist"):  # numpy scalars and arrays
        return dumps(o.tolist())
    raise TypeError(f"cannot serialize {type(o).__name__}")


def decode_float(v: Any) -> float:
    return float(v)


def digest(o: Any) -> str:
    return hashlib.sha256(dumps(o).encode()).hexdigest()
