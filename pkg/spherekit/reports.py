# spherekit/reports.py
"""
Canonical JSON reports.

Canonical form: keys sorted, no insignificant whitespace except one space
after ':' and ',', floats rendered with 17 significant digits ("%.17g"),
negative zero folded to zero. Parsing a canonical document and rendering it
again yields the same bytes.
"""

import json
import math
from typing import Any, Dict, Mapping, Optional

import numpy as np
from pydantic import BaseModel

from spherekit import __version__

TOOL_NAME = "spherekit"

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(payload: bytes) -> str:
    """64-bit FNV-1a digest as 16 lowercase hex digits."""
    h = FNV64_OFFSET
    for byte in payload:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return f"{h:016x}"


def array_digest(values: np.ndarray) -> str:
    """FNV-1a over the little-endian float64 bytes of an array (C order)."""
    return fnv1a64(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _render(value: Any) -> str:
    if isinstance(value, BaseModel):
        return _render(value.model_dump())
    if isinstance(value, np.ndarray):
        return _render(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number {value!r} cannot be written to a report")
        if value == 0.0:
            value = 0.0
        return "%.17g" % value
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=True)
    if isinstance(value, Mapping):
        items = sorted((str(k), v) for k, v in value.items())
        return "{" + ", ".join(f"{json.dumps(k, ensure_ascii=True)}: {_render(v)}" for k, v in items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value).__name__} into a report")


def canonical_json(value: Any) -> str:
    return _render(value)


def recanonicalize(text: str) -> str:
    return canonical_json(json.loads(text))


def build_report(
    command: str,
    parameters: Mapping[str, Any],
    results: Any,
    inputs: Optional[Mapping[str, str]] = None,
) -> Dict[str, Any]:
    """Assembles the report envelope: tool/version, input digests, parameter echo, results."""
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "command": command,
        "inputs": dict(inputs or {}),
        "parameters": dict(parameters),
        "results": results,
    }
