"""Finite-valued coarsening ``g(W)`` of the common variables.

Heteroskedasticity indices ``W's_Y`` and ``W's_d`` come from regressing the
absolute residuals on ``W`` in each sample; pooled weighted K-means on the two
standardised indices then yields ``K`` cells.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from .core_types import OutcomeSample, ProblemSpec, RegressorSample
from .regress import ols_fit


@dataclass(frozen=True)
class Grouping:
    K: int
    centers: np.ndarray
    assign1: np.ndarray
    assign2: np.ndarray
    p_hat: np.ndarray
    method: str = "kmeans"
    requested_K: int = 0
    notes: tuple = field(default=())

    @property
    def reduced(self) -> bool:
        return self.K < self.requested_K


def default_k(n: int, m: int) -> int:
    """``max(2, floor(min(n, m) ** 0.2))``."""
    if n < 2 or m < 2:
        raise ValueError("sample sizes must be at least 2")
    k = math.floor(min(n, m) ** 0.2)
    # guard against 32 ** 0.2 = 1.9999999...
    if (k + 1) ** 5 <= min(n, m):
        k += 1
    return max(2, k)


def cell_shares(assign, weights, K) -> np.ndarray:
    return np.bincount(assign, weights=weights, minlength=K) / weights.sum()


def pooled_probabilities(assign1, w1, assign2, w2, K) -> np.ndarray:
    n, m = assign1.size, assign2.size
    return (n * cell_shares(assign1, w1, K) + m * cell_shares(assign2, w2, K)) / (n + m)


def _relabel(assign1, assign2, centers):
    used = np.union1d(np.unique(assign1), np.unique(assign2))
    lut = np.full(centers.shape[0], -1, dtype=np.intp)
    lut[used] = np.arange(used.size)
    return lut[assign1], lut[assign2], centers[used]


def grouping_from_labels(labels1, labels2, w1=None, w2=None, centers=None, method="labels",
                         requested_K=None, notes=()) -> Grouping:
    """Grouping from arbitrary hashable cell labels given for both samples.

    Raises ``ValueError`` if some cell is populated in one sample only.
    """
    labels1 = np.asarray(labels1)
    labels2 = np.asarray(labels2)
    uniq, inv = np.unique(np.concatenate([labels1, labels2]), return_inverse=True)
    a1, a2 = inv[:labels1.size], inv[labels1.size:]
    K = uniq.size
    w1 = np.ones(a1.size) if w1 is None else np.asarray(w1, dtype=np.float64)
    w2 = np.ones(a2.size) if w2 is None else np.asarray(w2, dtype=np.float64)
    c1 = np.bincount(a1, weights=w1, minlength=K)
    c2 = np.bincount(a2, weights=w2, minlength=K)
    missing = [str(uniq[k]) for k in range(K) if c1[k] <= 0 or c2[k] <= 0]
    if missing:
        raise ValueError(f"cells not populated in both samples: {', '.join(missing[:10])}")
    if centers is None:
        centers = np.arange(K, dtype=np.float64).reshape(-1, 1)
    return Grouping(K, centers, a1, a2, pooled_probabilities(a1, w1, a2, w2, K), method,
                    requested_K or K, tuple(notes))


def heteroskedasticity_indices(W1, W2, resid_Y, resid_d, w1=None, w2=None):
    """Evaluate both indices on every row of both samples.

    Returns arrays of shape (n, 2) and (m, 2), columns ``(W's_Y, W's_d)``.
    """
    s_Y, _ = ols_fit(W1, np.abs(resid_Y), w1)
    s_d, _ = ols_fit(W2, np.abs(resid_d), w2)
    return (np.column_stack([W1 @ s_Y, W1 @ s_d]),
            np.column_stack([W2 @ s_Y, W2 @ s_d]))


def _repair_empty_cells(assign1, assign2, centers, w1, w2):
    """Merge cells lacking rows of either sample into their nearest neighbour."""
    merges = 0
    while True:
        K = centers.shape[0]
        c1 = np.bincount(assign1, weights=w1, minlength=K)
        c2 = np.bincount(assign2, weights=w2, minlength=K)
        bad = np.flatnonzero((c1 <= 0) | (c2 <= 0))
        if bad.size == 0 or K == 1:
            return assign1, assign2, centers, merges
        k = bad[np.argmin((c1 + c2)[bad])]
        dist = np.sum((centers - centers[k]) ** 2, axis=1)
        dist[k] = np.inf
        target = int(np.argmin(dist))
        tot = c1[k] + c2[k] + c1[target] + c2[target]
        if tot > 0:
            centers[target] = ((c1[k] + c2[k]) * centers[k]
                               + (c1[target] + c2[target]) * centers[target]) / tot
        assign1 = np.where(assign1 == k, target, assign1)
        assign2 = np.where(assign2 == k, target, assign2)
        assign1, assign2, centers = _relabel(assign1, assign2, centers)
        merges += 1


def build_grouping(s1: OutcomeSample, s2: RegressorSample, residuals_Y, residuals_d, K: int,
                   seed: int = 0, spec: ProblemSpec | None = None,
                   max_iter: int = 100) -> Grouping:
    """Construct ``g(W)`` with (at most) ``K`` cells, each populated in both samples.

    Parameters
    ----------
    residuals_Y : ndarray, shape (n,)
        Residuals of ``y`` on ``W`` in the outcome sample.
    residuals_d : ndarray, shape (m,)
        Residuals of ``eta_d`` on ``W`` in the regressor sample.
    K : int
        Requested number of cells.
    seed : int
        Seed of the k-means++ initialisation.
    spec : ProblemSpec, optional
        Only its ``intercept`` flag is used, to build ``W`` (default: with constant).
    """
    if K < 1:
        raise ValueError("K must be positive")
    intercept = True if spec is None else spec.intercept
    notes = []
    n, m = s1.n, s2.m
    w1, w2 = s1.weights, s2.weights

    if K == 1 or s1.W.shape[1] == 0:
        if K > 1:
            notes.append("W holds only the constant: single cell")
        return Grouping(1, np.zeros((1, 2)), np.zeros(n, dtype=np.intp), np.zeros(m, dtype=np.intp),
                        np.ones(1), "constant", K, tuple(notes))

    pooled_W = np.vstack([s1.W, s2.W])
    distinct, inv = np.unique(pooled_W, axis=0, return_inverse=True)
    inv = inv.ravel()
    if distinct.shape[0] <= K:
        # W finitely supported with few points: use g(W) = W
        a1, a2 = inv[:n], inv[n:]
        centers = distinct.astype(np.float64) if distinct.shape[1] else np.zeros((1, 2))
        a1, a2, centers, merges = _repair_empty_cells(a1, a2, centers.copy(), w1, w2)
        if merges:
            notes.append(f"merged {merges} support points populated in one sample only")
        Kf = centers.shape[0]
        return Grouping(Kf, centers, a1, a2, pooled_probabilities(a1, w1, a2, w2, Kf),
                        "distinct", K, tuple(notes))

    mk = lambda W: np.hstack([W, np.ones((W.shape[0], 1))]) if intercept else W
    I1, I2 = heteroskedasticity_indices(mk(s1.W), mk(s2.W), residuals_Y, residuals_d, w1, w2)
    Z = np.vstack([I1, I2])
    wz = np.concatenate([w1 / w1.mean(), w2 / w2.mean()])
    mu = np.average(Z, axis=0, weights=wz)
    sd = np.sqrt(np.average((Z - mu) ** 2, axis=0, weights=wz))
    # an index constant up to round-off carries no information
    flat = ~(sd > 1e-10 * np.maximum(1.0, np.abs(mu)))
    sd[flat] = 1.0
    Z = (Z - mu) / sd
    Z[:, flat] = 0.0

    n_distinct = np.unique(Z, axis=0).shape[0]
    K_eff = K
    if n_distinct < K:
        K_eff = max(n_distinct, 1)
        msg = f"K reduced from {K} to {K_eff}: only {n_distinct} distinct index points"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if K_eff == 1:
        return Grouping(1, Z.mean(axis=0, keepdims=True), np.zeros(n, dtype=np.intp),
                        np.zeros(m, dtype=np.intp), np.ones(1), "constant", K, tuple(notes))

    km = KMeans(n_clusters=K_eff, init="k-means++", n_init=1, max_iter=max_iter,
                random_state=seed, algorithm="lloyd")
    labels = km.fit_predict(Z, sample_weight=wz)
    centers = km.cluster_centers_.copy()
    a1, a2 = labels[:n].astype(np.intp), labels[n:].astype(np.intp)
    a1, a2, centers = _relabel(a1, a2, centers)
    a1, a2, centers, merges = _repair_empty_cells(a1, a2, centers, w1, w2)
    if merges:
        notes.append(f"merged {merges} cells populated in one sample only")
    Kf = centers.shape[0]
    return Grouping(Kf, centers, a1, a2, pooled_probabilities(a1, w1, a2, w2, Kf), "kmeans", K,
                    tuple(notes))
