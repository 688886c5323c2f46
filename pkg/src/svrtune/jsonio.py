"""Deterministic JSON serialization.

Every artifact file (models, normalizers, tune reports) is written through
this module so that reruns with identical inputs produce byte-identical
output. Floats are rendered with 17 significant digits, which round-trips
every finite double exactly; dict keys keep insertion order.
"""

from __future__ import annotations

import json
import math
from typing import Any

__all__ = ["dumps", "loads", "fmt_float"]


def fmt_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite float {value!r}")
    return format(float(value), ".17g")


def _encode(obj: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(fmt_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for k, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            out.append(f"{inner}{json.dumps(key)}: ")
            _encode(val, indent + 1, out)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[\n")
        for k, val in enumerate(obj):
            out.append(inner)
            _encode(val, indent + 1, out)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps(obj: Any) -> str:
    """Serialize to pretty JSON with lossless, reproducible float formatting."""
    out: list[str] = []
    _encode(obj, 0, out)
    out.append("\n")
    return "".join(out)


def loads(text: str) -> Any:
    return json.loads(text)
