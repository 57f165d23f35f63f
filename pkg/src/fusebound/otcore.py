"""One-dimensional optimal transport on weighted empirical distributions.

Everything here works with quantile functions ``F^{-1}(t) = inf{x : F(x) >= t}``
of weighted samples. Integrals over ``t in (0, 1]`` are computed exactly on the
merged grid of both samples' cumulative-weight breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalQuantile:
    """Weighted empirical distribution stored as a step quantile function.

    ``values`` are sorted (stable) and ``cumw`` holds the cumulative
    normalised weights, ending exactly at 1.
    """

    values: np.ndarray
    cumw: np.ndarray

    @classmethod
    def from_sample(cls, x, weights=None) -> "EmpiricalQuantile":
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        order = np.argsort(x, kind="stable")
        values = x[order]
        if weights is None:
            n = x.size
            # integer ratios keep equal rationals bit-identical across samples
            cumw = np.arange(1, n + 1, dtype=np.float64) / n
        else:
            w = np.asarray(weights, dtype=np.float64).ravel()[order]
            if w.shape != values.shape:
                raise ValueError("weights and values differ in length")
            if np.any(w < 0) or not w.sum() > 0:
                raise ValueError("weights must be nonnegative with a positive sum")
            cumw = np.cumsum(w) / w.sum()
            cumw[-1] = 1.0
            keep = w > 0
            values, cumw = values[keep], cumw[keep]
        return cls(values, cumw)

    def __len__(self):
        return self.values.size

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.cumw, prepend=0.0)

    def quantile(self, t) -> np.ndarray:
        """``F^{-1}(t)``: value at the first cumulative weight ``>= t``."""
        idx = np.searchsorted(self.cumw, t, side="left")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def cdf(self, x) -> np.ndarray:
        """``F(x)``, right-continuous."""
        idx = np.searchsorted(self.values, x, side="right")
        return np.where(idx > 0, self.cumw[np.maximum(idx - 1, 0)], 0.0)

    def cdf_left(self, x) -> np.ndarray:
        """``F(x^-)``."""
        idx = np.searchsorted(self.values, x, side="left")
        return np.where(idx > 0, self.cumw[np.maximum(idx - 1, 0)], 0.0)

    def mean(self) -> float:
        return math.fsum(self.masses * self.values)

    def second_moment(self) -> float:
        return math.fsum(self.masses * self.values ** 2)

    def negate(self) -> "EmpiricalQuantile":
        """Distribution of ``-X``."""
        masses = self.masses[::-1]
        cumw = np.cumsum(masses)
        cumw[-1] = 1.0
        return EmpiricalQuantile(-self.values[::-1], cumw)

    def integrated_quantile(self, t) -> np.ndarray:
        """``int_0^t F^{-1}(s) ds``, piecewise linear in ``t``."""
        knots = np.concatenate([[0.0], self.cumw])
        acc = np.concatenate([[0.0], np.cumsum(self.masses * self.values)])
        return np.interp(t, knots, acc)


def _as_eq(a) -> EmpiricalQuantile:
    return a if isinstance(a, EmpiricalQuantile) else EmpiricalQuantile.from_sample(a)


def merged_grid(a: EmpiricalQuantile, b: EmpiricalQuantile):
    """Segment lengths and the two quantile values on each merged-grid segment."""
    t = np.union1d(a.cumw, b.cumw)
    dt = np.diff(t, prepend=0.0)
    # on (t_{k-1}, t_k] both step functions are constant and equal their value at t_k
    return dt, a.quantile(t), b.quantile(t)


def quantile_inner_product(a, b) -> float:
    """``int_0^1 F_a^{-1}(t) F_b^{-1}(t) dt``, the comonotone (maximal) inner product."""
    a, b = _as_eq(a), _as_eq(b)
    dt, qa, qb = merged_grid(a, b)
    return math.fsum(dt * qa * qb)


def antitone_inner_product(a, b) -> float:
    """Inner product under the antitone (minimal) coupling."""
    a, b = _as_eq(a), _as_eq(b)
    return -quantile_inner_product(a.negate(), b)


def wasserstein2(a, b) -> float:
    """Wasserstein-2 distance between two one-dimensional empirical laws."""
    a, b = _as_eq(a), _as_eq(b)
    dt, qa, qb = merged_grid(a, b)
    return math.sqrt(math.fsum(dt * (qa - qb) ** 2))
