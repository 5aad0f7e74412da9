"""Compensated summation helpers.

Cross-mode prefix sums in the estimator mix terms whose magnitudes span many
decades, so they use a Neumaier running accumulator (exact to ~1 ulp of the
total).  Within a single mode's time grid the piece sums are done with numpy's
pairwise summation, whose O(eps * log n) error is equally negligible at the
grid sizes used here.
"""

from __future__ import annotations

import math


class NeumaierSum:
    """Streaming compensated sum (Kahan-Babuska / Neumaier variant)."""

    __slots__ = ("_s", "_c")

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._c = 0.0

    def add(self, y: float) -> None:
        t = self._s + y
        if abs(self._s) >= abs(y):
            self._c += (self._s - t) + y
        else:
            self._c += (y - t) + self._s
        self._s = t

    @property
    def value(self) -> float:
        return self._s + self._c


def exact_sum(values) -> float:
    """Exact rounded float sum (Shewchuk); use for small batches only."""
    return math.fsum(values)
