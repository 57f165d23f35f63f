"""Plug-in asymptotic variances of the bound estimators and confidence intervals.

Every influence column is evaluated exactly: the L-statistic integrals are
finite sums over the segments between consecutive order statistics, outside of
which the integrands vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from .bounds import BoundsEstimate, CommonFit, NoCommonFit
from .core_types import OutcomeSample, RegressorSample, ValidationError
from .otcore import EmpiricalQuantile
from .regress import Residualization

CI_METHODS = ("one_sided_z", "stoye")


@dataclass(frozen=True)
class InfluenceSet:
    """Estimated influence columns for one endpoint (``side``) of the interval.

    ``psi_2`` holds the columns living on the regressor sample and ``psi_1``
    those on the outcome sample.
    """

    side: str
    psi_2: dict
    psi_1: dict
    lambda_hat: float
    variance: float
    n: int
    m: int
    notes: tuple = field(default=())

    @property
    def se(self) -> float:
        """Standard error ``sqrt((n+m)/(nm) V)`` of the endpoint estimate."""
        return math.sqrt((self.n + self.m) / (self.n * self.m) * self.variance)

    @property
    def zero_variance(self) -> bool:
        return self.variance == 0.0


@dataclass(frozen=True)
class ConfidenceInterval:
    level: float
    lower: float
    upper: float
    method: str
    critical_value: float
    se_lower: float
    se_upper: float


def hhat(x, F: EmpiricalQuantile, G: EmpiricalQuantile) -> np.ndarray:
    """Average of ``F^{-1}`` over ``(G(x^-), G(x)]``.

    At points where ``G`` does not jump the interval is empty and
    ``F^{-1}(G(x))`` is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    a = G.cdf_left(x)
    b = G.cdf(x)
    jump = b > a
    out = F.quantile(b)
    if np.any(jump):
        aj, bj = a[jump], b[jump]
        out = np.asarray(out, dtype=np.float64).copy()
        out[jump] = (F.integrated_quantile(bj) - F.integrated_quantile(aj)) / (bj - aj)
    return out


def l_statistic_influence(x, G: EmpiricalQuantile, F: EmpiricalQuantile) -> np.ndarray:
    """``-int [1{x <= t} - G(t)] F^{-1}(G(t)) dt`` for every entry of ``x``.

    On ``[z_k, z_{k+1})`` (consecutive sorted values of ``G``'s sample) the
    integrand is constant, and it is zero below the minimum and above the
    maximum, so the integral is a finite sum.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = G.values
    L = np.diff(z)
    if L.size == 0:
        return np.zeros(np.shape(x))
    Gk = G.cumw[:-1]
    A = F.quantile(Gk) * L
    C = math.fsum(Gk * A)
    suffix = np.concatenate([np.cumsum(A[::-1])[::-1], [0.0]])
    # segments k with z_k >= x contribute 1{x <= t}; a point strictly inside
    # a segment adds the part of that segment to its right
    start = np.minimum(np.searchsorted(z, x, side="left"), L.size + 1)
    out = C - suffix[np.minimum(start, L.size)]
    inner = (start > 0) & (start <= L.size)
    k = start[inner] - 1
    out[inner] -= (z[k + 1] - x[inner]) * F.quantile(Gk[k])
    return out


def _wmean(a, w):
    return np.tensordot(w, a, axes=(0, 0)) / w.sum()


def _wvar(a, w):
    mu = _wmean(a, w)
    return float(_wmean((a - mu) ** 2, w))


def _side(bounds: BoundsEstimate, side: str):
    if side == "upper":
        return 1.0, bounds.upper
    if side == "lower":
        # the lower bound for d is minus the upper bound for -d
        return -1.0, -bounds.lower
    raise ValueError(f"side must be 'upper' or 'lower', not {side!r}")


def influence_no_common(s1, s2, residualization: Optional[Residualization], bounds: BoundsEstimate,
                        side: str = "upper") -> InfluenceSet:
    """Four-term influence decomposition for the bounds without common variables."""
    fit: NoCommonFit = bounds.fit
    if not isinstance(fit, NoCommonFit):
        raise ValidationError("influence_no_common needs bounds from bounds_no_common")
    res = residualization if residualization is not None else fit.res
    sign, bbar = _side(bounds, side)
    eta = sign * res.eta
    w2, w1 = res.weights, fit.w1
    F = fit.F
    # atoms must be bitwise identical to the evaluation points
    G = fit.G if res is fit.res else EmpiricalQuantile.from_sample(res.eta, res.weights)
    G = G if sign > 0 else G.negate()
    n, m = bounds.n, bounds.m
    lam = n / (n + m)
    notes = []

    E2 = res.mean_sq_eta
    psi1 = -bbar * (eta ** 2 - E2)
    T = res.T_rest
    if T.shape[1]:
        h = hhat(eta, F, G)
        ETT = _wmean(T[:, :, None] * T[:, None, :], w2)
        EhT = _wmean(h[:, None] * T, w2)
        psi2 = -(T @ np.linalg.solve(ETT, EhT)) * eta
    else:
        psi2 = np.zeros_like(eta)
    psi3 = l_statistic_influence(eta, G, F)
    psi4 = l_statistic_influence(fit.y, F, G)
    if np.ptp(fit.y) == 0 or np.ptp(eta) == 0:
        notes.append("degenerate outcome or residual: zero variance")

    V = (lam * _wvar(psi1 + psi2 + psi3, w2) + (1 - lam) * _wvar(psi4, w1)) / E2 ** 2
    return InfluenceSet(side, {"psi1": psi1, "psi2": psi2, "psi3": psi3}, {"psi4": psi4}, lam,
                        max(V, 0.0), n, m, tuple(notes))


def influence_common(s1, s2, spec, grouping, bounds: BoundsEstimate,
                     side: str = "upper") -> InfluenceSet:
    """Influence decomposition for the cell-wise bounds with common variables.

    Columns on the regressor sample: ``cross_delta_d`` (estimation of
    ``delta_d`` in the cross term), ``cross_EWW`` (its share of the pooled
    ``E(WW')``), ``resid_d`` (estimated ``nu_d`` inside the cell-wise quantile
    products), ``lstat_d``, ``cells`` (its share of the pooled ``p_k``) and
    ``denominator``. Columns on the outcome sample: ``cross_EWW``,
    ``cross_delta_Y``, ``resid_Y``, ``lstat_Y`` and ``cells``.
    """
    fit: CommonFit = bounds.fit
    if not isinstance(fit, CommonFit):
        raise ValidationError("influence_common needs bounds from bounds_with_common")
    sign, bbar = _side(bounds, side)
    cr = fit.cr
    res = cr.res
    n, m = bounds.n, bounds.m
    lam = n / (n + m)
    w1, w2 = fit.w1, fit.w2
    W1, W2, T = cr.W1, cr.W2, res.T_rest
    eta = sign * res.eta
    nu_d = sign * cr.nu_d
    delta_d = sign * cr.delta_d
    nu_Y, delta_Y = cr.nu_Y, cr.delta_Y
    K = fit.p_hat.size
    Q = fit.Q_upper if sign > 0 else -fit.Q_lower
    a1, a2 = fit.assign1, fit.assign2
    pi1 = np.bincount(a1, weights=w1, minlength=K) / w1.sum()
    pi2 = np.bincount(a2, weights=w2, minlength=K) / w2.sum()

    E2 = res.mean_sq_eta
    EWW2 = _wmean(W2[:, :, None] * W2[:, None, :], w2)
    EWW1 = _wmean(W1[:, :, None] * W1[:, None, :], w1)
    if T.shape[1]:
        ETT = _wmean(T[:, :, None] * T[:, None, :], w2)
        proj = np.linalg.solve(ETT, (T * eta[:, None]).T).T  # E(TT')^{-1} T_j eta_j
        EWT = _wmean(W2[:, :, None] * T[:, None, :], w2)
        A = W2 * nu_d[:, None] - proj @ EWT.T
    else:
        proj = np.zeros((m, 0))
        A = W2 * nu_d[:, None]

    h2 = np.empty(m)
    lst2 = np.empty(m)
    h1 = np.empty(n)
    lst1 = np.empty(n)
    r2 = fit.p_hat[a2] / pi2[a2]
    r1 = fit.p_hat[a1] / pi1[a1]
    for k in range(K):
        i2, i1 = a2 == k, a1 == k
        Fk = fit.F_cells[k]
        Gk = fit.G_cells[k] if sign > 0 else fit.G_cells[k].negate()
        h2[i2] = hhat(nu_d[i2], Fk, Gk)
        lst2[i2] = l_statistic_influence(nu_d[i2], Gk, Fk)
        h1[i1] = hhat(nu_Y[i1], Gk, Fk)
        lst1[i1] = l_statistic_influence(nu_Y[i1], Fk, Gk)

    xd2, xy2 = W2 @ delta_d, W2 @ delta_Y
    xd1, xy1 = W1 @ delta_d, W1 @ delta_Y
    EhW2 = _wmean((r2 * h2)[:, None] * W2, w2)
    psi2 = {
        # delta_d is fitted on sample 2 with its own E(WW'), the cross term uses the pooled one
        "cross_delta_d": A @ np.linalg.solve(EWW2, fit.EWW @ delta_Y),
        "cross_EWW": (1 - lam) * (xd2 * xy2 - _wmean(xd2 * xy2, w2)),
        "resid_d": -(A @ np.linalg.solve(EWW2, EhW2)),
        "lstat_d": r2 * lst2,
        "cells": (1 - lam) * (Q[a2] - pi2 @ Q),
        "denominator": -bbar * (eta ** 2 - E2),
    }
    if T.shape[1]:
        EhT = _wmean((r2 * h2)[:, None] * T, w2)
        psi2["resid_d"] = psi2["resid_d"] - proj @ EhT
    EhW1 = _wmean((r1 * h1)[:, None] * W1, w1)
    psi1 = {
        "cross_EWW": lam * (xd1 * xy1 - _wmean(xd1 * xy1, w1)),
        "cross_delta_Y": (W1 @ np.linalg.solve(EWW1, fit.EWW @ delta_d)) * nu_Y,
        "resid_Y": -(W1 @ np.linalg.solve(EWW1, EhW1)) * nu_Y,
        "lstat_Y": r1 * lst1,
        "cells": lam * (Q[a1] - pi1 @ Q),
    }
    s2 = sum(psi2.values())
    s1 = sum(psi1.values())
    V = (lam * _wvar(s2, w2) + (1 - lam) * _wvar(s1, w1)) / E2 ** 2
    notes = () if V > 0 else ("zero variance",)
    return InfluenceSet(side, psi2, psi1, lam, max(V, 0.0), n, m, notes)


def influence(s1, s2, spec, grouping, bounds: BoundsEstimate, side="upper") -> InfluenceSet:
    if isinstance(bounds.fit, NoCommonFit):
        return influence_no_common(s1, s2, None, bounds, side)
    return influence_common(s1, s2, spec, grouping, bounds, side)


def stoye_critical_value(alpha: float, gap: float, sigma_max: float, tol: float = 1e-10) -> float:
    """Solve ``Phi(c + gap / sigma_max) - Phi(-c) = 1 - alpha`` for ``c``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z1 = stats.norm.ppf(1 - alpha)
    z2 = stats.norm.ppf(1 - alpha / 2)
    if sigma_max <= 0 or not np.isfinite(gap / sigma_max):
        return z1
    ratio = max(gap, 0.0) / sigma_max
    f = lambda c: stats.norm.cdf(c + ratio) - stats.norm.cdf(-c) - (1 - alpha)
    if f(z1) >= 0:
        return z1
    return optimize.brentq(f, z1, z2, xtol=tol)


def confidence_interval(bounds: BoundsEstimate, infl_lower, infl_upper, alpha: float = 0.05,
                        method: str = "one_sided_z", se_lower: float = None,
                        se_upper: float = None) -> ConfidenceInterval:
    """Confidence interval for ``d'b`` at level ``1 - alpha``.

    ``one_sided_z`` widens each endpoint by ``z_{1-alpha}`` standard errors,
    valid when the identified interval is not a point. ``stoye`` uses a
    critical value between ``z_{1-alpha}`` and ``z_{1-alpha/2}`` that depends
    continuously on the estimated width, which keeps coverage when the
    parameter may be point identified. Standard errors come from the influence
    sets unless given explicitly (e.g. from a cluster bootstrap).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    sl = infl_lower.se if se_lower is None else se_lower
    su = infl_upper.se if se_upper is None else se_upper
    if method == "one_sided_z":
        c = float(stats.norm.ppf(1 - alpha))
    elif method == "stoye":
        c = float(stoye_critical_value(alpha, bounds.upper - bounds.lower, max(sl, su)))
    else:
        raise ValueError(f"unknown CI method {method!r}")
    return ConfidenceInterval(1 - alpha, bounds.lower - c * sl, bounds.upper + c * su, method, c,
                              sl, su)


def cluster_bootstrap_se(estimator: Callable, s1, s2, clusters1=None, clusters2=None,
                         reps: int = 200, seed: int = 0):
    """Percentile standard errors of both endpoints from a cluster bootstrap.

    Clusters are resampled with replacement, independently in each sample
    (rows act as their own clusters when labels are missing), ``estimator``
    is re-run on each draw, and the standard error is half the distance
    between the 15.87% and 84.13% quantiles of the replicates.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB007])))

    def draw(labels, size):
        labels = np.arange(size) if labels is None else np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        members = np.split(np.argsort(inv, kind="stable"), np.cumsum(np.bincount(inv))[:-1])
        pick = rng.integers(0, uniq.size, uniq.size)
        return np.concatenate([members[c] for c in pick])

    lows, ups = [], []
    for _ in range(reps):
        i1 = draw(clusters1, s1.n)
        i2 = draw(clusters2, s2.m)
        b1 = OutcomeSample(s1.y[i1], s1.W[i1], s1.weights[i1], s1.columns)
        b2 = RegressorSample(s2.Xo[i2], s2.W[i2], s2.weights[i2], s2.columns)
        est = estimator(b1, b2)
        lows.append(est.lower)
        ups.append(est.upper)
    q = [stats.norm.cdf(-1), stats.norm.cdf(1)]
    ql, qu = np.quantile(lows, q), np.quantile(ups, q)
    return float((ql[1] - ql[0]) / 2), float((qu[1] - qu[0]) / 2)
