"""Streaming sum / mean / variance of an observation sequence."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass
class TrajectoryState:
    """Running S_n, sum of squares, sample mean and (1/n)-normalised sample variance.

    The variance is tracked with Welford's recurrence, so it stays accurate
    when the mean is large relative to the spread.
    """

    n: int = 0
    S_n: float = 0.0
    sum_sq: float = 0.0
    mu_hat: float = 0.0
    _m2: float = 0.0

    def push(self, x: float) -> "TrajectoryState":
        self.n += 1
        self.S_n += x
        self.sum_sq += x * x
        delta = x - self.mu_hat
        self.mu_hat += delta / self.n
        self._m2 += delta * (x - self.mu_hat)
        return self

    @property
    def sigma_hat_sq(self) -> float:
        if self.n == 0:
            return 0.0
        return max(self._m2 / self.n, 0.0)
