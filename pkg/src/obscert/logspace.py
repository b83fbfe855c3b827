"""Log-domain scalar arithmetic for certified bounds.

Every bound in the toolkit that can overflow a double -- factorial powers,
propagation factors kappa**K, the final observability constants -- is carried
as a natural logarithm.  Helpers here keep that arithmetic exact and
deterministic.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

LOG2 = math.log(2.0)
LOG10 = math.log(10.0)
NEG_INF = float("-inf")


def log_factorial(n: int) -> float:
    """ln(n!) via lgamma; exact to double precision for all n >= 0."""
    if n < 0:
        raise ValueError(f"factorial of negative {n}")
    return math.lgamma(n + 1)


def log_add(a: float, b: float) -> float:
    """ln(e^a + e^b), safe for -inf arguments."""
    return float(np.logaddexp(a, b))


def log_sum(values: Iterable[float]) -> float:
    """ln(sum of e^v) over an iterable of log-values."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return NEG_INF
    m = float(np.max(arr))
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(arr - m))))


def log_pow(log_x: float, p: float) -> float:
    """ln(x^p) given ln(x)."""
    return p * log_x


def from_log(log_x: float) -> float:
    """e^log_x, returning inf on overflow instead of raising."""
    if log_x == NEG_INF:
        return 0.0
    try:
        return math.exp(log_x)
    except OverflowError:
        return float("inf")


def to_log(x: float) -> float:
    """ln(x) with ln(0) = -inf."""
    if x < 0:
        raise ValueError(f"log of negative value {x}")
    if x == 0.0:
        return NEG_INF
    return math.log(x)


def log10_of(log_x: float) -> float:
    """Convert a natural-log value to base-10."""
    return log_x / LOG10
