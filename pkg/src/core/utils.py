"""Utility functions and helpers."""

import hashlib
import math
import uuid
from typing import Any


def generate_run_id() -> str:
    """Generate a unique run ID for log correlation."""
    return str(uuid.uuid4())


def stable_hash(*parts: Any) -> int:
    """Hash parts into a 32-bit integer that is stable across processes."""
    payload = "::".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") % (2**32)


def round_significant(value: float, digits: int = 12) -> float:
    """Round a float to the given number of significant digits."""
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def round_floats(obj: Any, digits: int = 12) -> Any:
    """Recursively round every float in a JSON-ready structure."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return round_significant(obj, digits)
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


def format_float(value: float, digits: int = 12) -> str:
    """Format a float for CSV output."""
    return f"{value:.{digits}g}"


def format_outcome(outcome: tuple[int, ...]) -> str:
    """Render an outcome tuple such as (1, -1, 1) as '+-+'."""
    return "".join("+" if o > 0 else "-" for o in outcome)
