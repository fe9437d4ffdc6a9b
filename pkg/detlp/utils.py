"""
Utility functions for detlp.
"""
import math
import time
from typing import Union


def now_ms() -> int:
    """Get current timestamp in milliseconds."""
    return int(time.time() * 1000)


def fmt(x: Union[int, float], nd: int = 6) -> str:
    """Format number with specified decimal places."""
    return f"{x:.{nd}f}"


def parse_decimal(value: Union[str, int, float], what: str = "value") -> float:
    """Parse a decimal string (or plain number) into the nearest binary float.

    Args:
        value: Decimal string such as "0.125", or an int/float
        what: Name used in error messages

    Returns:
        Correctly rounded float

    Raises:
        ValueError: If the value is not a finite number
    """
    if isinstance(value, bool):
        raise ValueError(f"{what} must be a number, got boolean {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{what} is not a decimal number: {value!r}") from None
    if not math.isfinite(x):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return x


def decimal_str(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    return repr(x)


def truncate(x: float, nd: int) -> float:
    """Truncate toward zero at nd decimal places."""
    scale = 10.0 ** nd
    # absorb binary noise such as 0.29 * 100 = 28.999999999999996
    return math.trunc(round(x * scale, 6)) / scale
