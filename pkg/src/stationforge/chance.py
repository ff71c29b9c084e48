"""Deterministic counterparts of one-sided individual chance constraints.

A stochastic bound ``b`` enters a linear constraint either as a floor,
``b <= a'x``, or as a ceiling, ``a'x <= b``. Requiring the constraint to hold
with probability at least ``1 - eps`` turns it into a deterministic constraint
against a quantile of ``b``:

* floor:   ``F_b^{-1}(1 - eps) <= a'x``  (:func:`deterministic_lower`)
* ceiling: ``a'x <= F_b^{-1}(eps)``      (:func:`deterministic_upper`)

``StochasticParam`` fields may be scalars or arrays (one entry per time step);
thresholds are computed elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np


class DomainError(ValueError):
    pass


Form = Literal["gaussian", "empirical"]


@dataclass(frozen=True, eq=False)
class StochasticParam:
    mean: float | np.ndarray
    std: float | np.ndarray
    samples: np.ndarray | None = None  # shape (n,) or (n, T)
    form: Form = "gaussian"

    def __post_init__(self):
        if self.form not in ("gaussian", "empirical"):
            raise ValueError(f"unknown form {self.form!r}")
        if np.any(np.asarray(self.std) < 0):
            raise ValueError("std must be non-negative")
        if self.form == "empirical" and (self.samples is None or len(self.samples) < 1):
            raise ValueError("empirical form needs at least one sample")

    @classmethod
    def from_samples(cls, samples, form: Form = "gaussian") -> StochasticParam:
        x = np.asarray(samples, dtype=float)
        std = x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros_like(x[0])
        std = np.where(np.ptp(x, axis=0) == 0, 0.0, std)  # no rounding noise for constant samples
        return cls(x.mean(axis=0), std, x, form)

    def with_form(self, form: Form) -> StochasticParam:
        return StochasticParam(self.mean, self.std, self.samples, form)


@dataclass(frozen=True)
class ReliabilityLevel:
    epsilon: float = 0.2

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise DomainError(f"epsilon must lie in (0, 0.5], got {self.epsilon}")


# Acklam's rational approximation, refined below
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to about 1e-12 on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile needs 0 < p < 1, got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # Halley steps against erfc; the tail form keeps relative accuracy near 0 and 1
    for _ in range(2):
        if p < 0.5:
            err = std_normal_cdf(x) - p
        else:
            err = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
        u = err * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
        x = x - u / (1 + x * u / 2)
    return x


def _nearest_rank(samples: np.ndarray, p: float) -> np.ndarray:
    x = np.sort(np.asarray(samples, dtype=float), axis=0)
    n = x.shape[0]
    rank = min(max(math.ceil(p * n - 1e-9), 1), n)
    return x[rank - 1]


def deterministic_lower(b: StochasticParam, eps: float):
    """Threshold ``v`` such that ``v <= a'x`` gives ``Pr(b <= a'x) >= 1 - eps``."""
    ReliabilityLevel(eps)
    if b.form == "empirical":
        return _nearest_rank(b.samples, 1 - eps)
    return b.mean - std_normal_quantile(eps) * np.asarray(b.std)


def deterministic_upper(b: StochasticParam, eps: float):
    """Threshold ``v`` such that ``a'x <= v`` gives ``Pr(a'x <= b) >= 1 - eps``."""
    ReliabilityLevel(eps)
    if b.form == "empirical":
        return _nearest_rank(b.samples, eps)
    return b.mean + std_normal_quantile(eps) * np.asarray(b.std)
