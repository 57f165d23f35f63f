"""Point estimates of the endpoints of the identified interval for ``d'b``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core_types import (OutcomeSample, ProblemSpec, RegressorSample, SingularityError,
                         ValidationError, design_W, design_X, has_common_variables, require_valid,
                         weighted_second_moment)
from .grouping import Grouping, cell_shares, pooled_probabilities
from .otcore import EmpiricalQuantile, antitone_inner_product, quantile_inner_product
from .regress import Residualization, fwl_residualize, ols_fit


@dataclass(frozen=True)
class BoundsEstimate:
    lower: float
    upper: float
    numerator_terms: dict
    mean_sq_eta: float
    method: str
    n: int
    m: int
    # intermediate quantities reused by the variance estimators
    fit: object = field(default=None, repr=False, compare=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _ordered(lower, upper):
    if lower > upper:
        # only reachable through rounding on degenerate data
        mid = 0.5 * (lower + upper)
        return mid, mid
    return lower, upper


@dataclass(frozen=True)
class NoCommonFit:
    res: Residualization
    F: EmpiricalQuantile  # outcome
    G: EmpiricalQuantile  # eta_d
    y: np.ndarray
    w1: np.ndarray


def bounds_no_common(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec) -> BoundsEstimate:
    """Sharp bounds when only the constant is common to both samples.

    ``upper = QIP(eta_d, y) / E(eta_d^2)``; the lower bound uses the antitone
    coupling, i.e. ``-upper(-d)``.
    """
    require_valid(spec, s1, s2)
    if spec.common_regressor_columns:
        raise ValidationError("bounds_no_common does not take common regressors")
    res = fwl_residualize(s2, spec)
    if not res.mean_sq_eta > 0:
        raise SingularityError("E(eta_d^2) is zero")
    F = EmpiricalQuantile.from_sample(s1.y, s1.weights)
    G = EmpiricalQuantile.from_sample(res.eta, s2.weights)
    up = quantile_inner_product(G, F)
    lo = antitone_inner_product(G, F)
    lower, upper = _ordered(lo / res.mean_sq_eta, up / res.mean_sq_eta)
    return BoundsEstimate(lower, upper, {"cross_term": 0.0, "qip_upper": up, "qip_lower": lo},
                          res.mean_sq_eta, "no_common", s1.n, s2.m,
                          NoCommonFit(res, F, G, s1.y, s1.weights))


@dataclass(frozen=True)
class CommonResiduals:
    res: Residualization
    W1: np.ndarray
    W2: np.ndarray
    delta_d: np.ndarray
    nu_d: np.ndarray
    delta_Y: np.ndarray
    nu_Y: np.ndarray


def common_residuals(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec) -> CommonResiduals:
    """``eta_d`` and the projections of ``eta_d`` (sample 2) and ``y`` (sample 1) on ``W``."""
    res = fwl_residualize(s2, spec)
    W1 = design_W(s1.W, spec)
    W2 = design_W(s2.W, spec)
    delta_d, nu_d = ols_fit(W2, res.eta, s2.weights)
    delta_Y, nu_Y = ols_fit(W1, s1.y, s1.weights)
    return CommonResiduals(res, W1, W2, delta_d, nu_d, delta_Y, nu_Y)


@dataclass(frozen=True)
class CommonFit:
    cr: CommonResiduals
    w1: np.ndarray
    w2: np.ndarray
    EWW: np.ndarray
    assign1: np.ndarray
    assign2: np.ndarray
    p_hat: np.ndarray
    F_cells: tuple  # nu_Y per cell
    G_cells: tuple  # nu_d per cell
    Q_upper: np.ndarray
    Q_lower: np.ndarray
    cross: float


def bounds_with_common(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec,
                       grouping: Optional[Grouping] = None,
                       residuals: Optional[CommonResiduals] = None) -> BoundsEstimate:
    """Cell-wise bounds given a finite grouping ``g(W)``.

    ``upper = [delta_d' E(WW') delta_Y + sum_k p_k QIP_k(nu_d, nu_Y)] / E(eta_d^2)``
    with ``E(WW')`` and ``p_k`` pooled over both samples. ``grouping=None``
    means a single cell.
    """
    require_valid(spec, s1, s2)
    cr = residuals if residuals is not None else common_residuals(s1, s2, spec)
    res = cr.res
    if not res.mean_sq_eta > 0:
        raise SingularityError("E(eta_d^2) is zero")
    n, m = s1.n, s2.m
    w1, w2 = s1.weights, s2.weights
    EWW = (n * weighted_second_moment(cr.W1, w1) + m * weighted_second_moment(cr.W2, w2)) / (n + m)
    cross = float(cr.delta_d @ EWW @ cr.delta_Y)

    if grouping is None:
        a1, a2, K = np.zeros(n, dtype=np.intp), np.zeros(m, dtype=np.intp), 1
    else:
        a1, a2, K = grouping.assign1, grouping.assign2, grouping.K
        if a1.shape[0] != n or a2.shape[0] != m:
            raise ValidationError("grouping does not match the samples")
    p_hat = pooled_probabilities(a1, w1, a2, w2, K)
    F_cells, G_cells = [], []
    Q_up = np.empty(K)
    Q_lo = np.empty(K)
    for k in range(K):
        i1, i2 = a1 == k, a2 == k
        if not (np.any(w1[i1] > 0) and np.any(w2[i2] > 0)):
            raise ValidationError(f"cell {k} is empty in one of the samples")
        Fk = EmpiricalQuantile.from_sample(cr.nu_Y[i1], w1[i1])
        Gk = EmpiricalQuantile.from_sample(cr.nu_d[i2], w2[i2])
        F_cells.append(Fk)
        G_cells.append(Gk)
        Q_up[k] = quantile_inner_product(Gk, Fk)
        Q_lo[k] = antitone_inner_product(Gk, Fk)
    qs_up = math.fsum(p_hat * Q_up)
    qs_lo = math.fsum(p_hat * Q_lo)
    lower, upper = _ordered((cross + qs_lo) / res.mean_sq_eta, (cross + qs_up) / res.mean_sq_eta)
    fit = CommonFit(cr, w1, w2, EWW, a1, a2, p_hat, tuple(F_cells), tuple(G_cells), Q_up, Q_lo,
                    cross)
    return BoundsEstimate(lower, upper,
                          {"cross_term": cross, "qip_upper": qs_up, "qip_lower": qs_lo},
                          res.mean_sq_eta, "common", n, m, fit)


def propensity_by_cell(f1, f0, p: float) -> np.ndarray:
    """``P(D=1 | cell) = p f1 / (p f1 + (1-p) f0)`` from the two cell-frequency vectors."""
    f1 = np.asarray(f1, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    return p * f1 / (p * f1 + (1 - p) * f0)


def population_weights(grouping: Grouping, s1: OutcomeSample, s2: RegressorSample, mode: str,
                       p: Optional[float]):
    """Row-weight multipliers that turn each sample into draws from the target population.

    Returns ``(mult1, mult2, propensity)`` where ``propensity`` is ``p(W)``
    evaluated per cell.
    """
    K = grouping.K
    f1 = cell_shares(grouping.assign1, s1.weights, K)
    f0 = cell_shares(grouping.assign2, s2.weights, K)
    bad = [k for k in range(K) if not (f1[k] > 0 and f0[k] > 0)]
    if bad:
        which = "outcome" if f1[bad[0]] <= 0 else "regressor"
        raise ValidationError(f"cell {bad[0]} is absent from the {which} sample "
                              "(propensity 0 or 1)")
    if mode == "common":
        return np.ones(s1.n), np.ones(s2.m), np.full(K, np.nan)
    if p is None or not 0 < p < 1:
        raise ValidationError(f"mode {mode!r} needs p in (0, 1)")
    if mode == "reweighted":
        ps = propensity_by_cell(f1, f0, p)
        c1, c2 = p / ps, (1 - p) / (1 - ps)
    elif mode == "target_y_population":
        ps = propensity_by_cell(f1, f0, p)
        c1, c2 = np.ones(K), (1 - p) / p * ps / (1 - ps)
    elif mode == "subpopulation":
        # the regressor sample represents the whole population here
        ps = p * f1 / f0
        c1, c2 = np.ones(K), ps / p
    else:
        raise ValidationError(f"unknown population mode {mode!r}")
    return c1[grouping.assign1], c2[grouping.assign2], ps


def bounds_weighted(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec, grouping: Grouping,
                    mode: Optional[str] = None) -> BoundsEstimate:
    """Bounds when the two samples come from populations differing in their law of ``W``.

    ``grouping`` must describe the support cells of ``W`` (or of ``g(W)``);
    propensities are estimated from cell frequencies. Every mode amounts to
    inverse-probability row weights after which the common-population
    estimator applies unchanged.
    """
    mode = mode or spec.population_mode
    require_valid(replace(spec, population_mode="common"), s1, s2)
    mult1, mult2, ps = population_weights(grouping, s1, s2, mode, spec.p)
    t1 = OutcomeSample(s1.y, s1.W, s1.weights * mult1, s1.columns)
    t2 = RegressorSample(s2.Xo, s2.W, s2.weights * mult2, s2.columns)
    est = bounds_with_common(t1, t2, replace(spec, population_mode="common"), grouping)
    terms = dict(est.numerator_terms, propensity=ps.tolist())
    return replace(est, method=f"weighted:{mode}", numerator_terms=terms)


def pacini_bounds(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec):
    """Outer bounds combining per-coordinate extreme couplings independently.

    With ``w = E(XX')^{-1} d``, each ``E(X_k Y)`` is replaced by its own
    comonotone or antitone value according to the sign of ``w_k``. Returns
    ``(lower, upper)``.
    """
    require_valid(spec, s1, s2)
    if spec.common_regressor_columns:
        raise ValidationError("pacini_bounds does not take common regressors")
    X = design_X(s2, spec)
    S = weighted_second_moment(X, s2.weights)
    w = np.linalg.solve(S, spec.direction)
    F = EmpiricalQuantile.from_sample(s1.y, s1.weights)
    up, lo = [], []
    for k in range(X.shape[1]):
        Gk = EmpiricalQuantile.from_sample(X[:, k], s2.weights)
        hi, low = quantile_inner_product(Gk, F), antitone_inner_product(Gk, F)
        if w[k] > 0:
            up.append(w[k] * hi)
            lo.append(w[k] * low)
        elif w[k] < 0:
            up.append(w[k] * low)
            lo.append(w[k] * hi)
    return _ordered(math.fsum(lo), math.fsum(up))


def estimate_bounds(s1, s2, spec, grouping=None) -> BoundsEstimate:
    """Dispatch on the presence of common variables and on the population mode."""
    if not has_common_variables(s1, spec):
        if spec.population_mode != "common":
            raise ValidationError("population modes other than 'common' need common variables")
        return bounds_no_common(s1, s2, spec)
    if spec.population_mode != "common":
        if grouping is None:
            raise ValidationError("weighted modes need a grouping of W")
        return bounds_weighted(s1, s2, spec, grouping)
    return bounds_with_common(s1, s2, spec, grouping)
