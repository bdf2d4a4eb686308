"""Forecast quality metrics, computed on megaliter values.

``percentage_error`` is the mean absolute percentage error (MAPE).
``tolerance_accuracy`` is the share of predictions within +/- tau megaliters
of the actual demand, with a deviation of exactly tau counted as accurate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOLERANCE_RULES = ("fixed", "fraction_of_mean")
DEFAULT_TOLERANCE_FRACTION = 0.19
REFERENCE_TAU_ML = 500.0


class MetricError(ValueError):
    pass


def _pair(predictions, actuals):
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    a = np.asarray(actuals, dtype=np.float64).reshape(-1)
    if p.size != a.size:
        raise MetricError(f"{p.size} predictions vs {a.size} actuals")
    if p.size == 0:
        raise MetricError("no points to score")
    return p, a


def percentage_error(predictions, actuals) -> float:
    """Mean of ``100 * |prediction - actual| / |actual|``."""
    p, a = _pair(predictions, actuals)
    if np.any(a == 0):
        raise MetricError("percentage error is undefined for zero actuals")
    return float(np.mean(100.0 * np.abs(p - a) / np.abs(a)))


@dataclass(frozen=True)
class Tolerance:
    """Accuracy band half-width ``tau`` in megaliters and the rule that produced it."""

    tau: float
    rule: str = "fixed"

    def __post_init__(self):
        if not self.tau > 0:
            raise MetricError(f"tau must be positive, got {self.tau}")
        if self.rule not in TOLERANCE_RULES:
            raise MetricError(f"unknown tolerance rule {self.rule!r}")


def tolerance_accuracy(predictions, actuals, tol: Tolerance | float) -> float:
    """Percentage of points with ``|prediction - actual| <= tau``."""
    tau = tol.tau if isinstance(tol, Tolerance) else float(tol)
    p, a = _pair(predictions, actuals)
    hits = np.count_nonzero(np.abs(p - a) <= tau)
    return 100.0 * hits / p.size


def derive_tolerance(series, fraction: float = DEFAULT_TOLERANCE_FRACTION) -> Tolerance:
    """``tau = fraction * mean(demand)`` for a :class:`DemandSeries` (or array of demands)."""
    if not 0.0 < fraction < 1.0:
        raise MetricError(f"fraction must lie in (0, 1), got {fraction}")
    demands = np.asarray(getattr(series, "demands", series), dtype=np.float64).reshape(-1)
    if demands.size == 0:
        raise MetricError("cannot derive a tolerance from an empty series")
    return Tolerance(fraction * float(demands.mean()), "fraction_of_mean")


def safe_percentage_error(predictions, actuals) -> float:
    """MAPE, or NaN when undefined (zero actuals)."""
    try:
        return percentage_error(predictions, actuals)
    except MetricError:
        return float("nan")
