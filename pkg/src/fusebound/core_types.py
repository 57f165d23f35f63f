"""Data model for two-sample regression problems.

The outcome sample holds ``(y, W)`` and the regressor sample holds
``(X_o, W)``. ``W`` stores the raw common variables; the constant is never
stored and is appended internally when ``ProblemSpec.intercept`` is set.
Columns of ``W`` listed in ``ProblemSpec.common_regressor_columns`` enter the
regression (they are the common regressors); the remaining columns are
auxiliary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

POPULATION_MODES = ("common", "reweighted", "target_y_population", "subpopulation")

# smallest singular value must exceed this fraction of the largest
SINGULAR_RTOL = 1e-10


class FuseboundError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(FuseboundError, ValueError):
    """Inputs violate a structural assumption."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SingularityError(FuseboundError, np.linalg.LinAlgError):
    """A moment matrix is numerically singular."""


def _as_matrix(a, ncols_if_empty: int = 0) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if a.size else a.reshape(0, ncols_if_empty)
    return a


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OutcomeSample:
    """Rows ``(y_i, W_i, weight_i)`` from the dataset containing the outcome."""

    y: np.ndarray
    W: np.ndarray
    weights: Optional[np.ndarray] = None
    columns: Optional[tuple] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        W = self.W
        if W is None:
            W = np.empty((y.size, 0))
        W = np.asarray(W, dtype=np.float64)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        w = np.ones(y.size) if self.weights is None else np.asarray(self.weights, dtype=np.float64).ravel()
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "W", _freeze(W))
        object.__setattr__(self, "weights", _freeze(w))
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class RegressorSample:
    """Rows ``(X_o_j, W_j, weight_j)`` from the dataset containing the outside regressors."""

    Xo: np.ndarray
    W: np.ndarray
    weights: Optional[np.ndarray] = None
    columns: Optional[tuple] = None

    def __post_init__(self):
        Xo = np.asarray(self.Xo, dtype=np.float64)
        if Xo.ndim == 1:
            Xo = Xo.reshape(-1, 1)
        W = self.W
        if W is None:
            W = np.empty((Xo.shape[0], 0))
        W = np.asarray(W, dtype=np.float64)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        w = np.ones(Xo.shape[0]) if self.weights is None else np.asarray(self.weights, dtype=np.float64).ravel()
        object.__setattr__(self, "Xo", _freeze(Xo))
        object.__setattr__(self, "W", _freeze(W))
        object.__setattr__(self, "weights", _freeze(w))
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def m(self) -> int:
        return self.Xo.shape[0]


@dataclass(frozen=True)
class ProblemSpec:
    """What to estimate: the projection ``d'b`` of the best-linear-prediction coefficients.

    The regressor vector is ordered ``X = (X_o, W[:, common_regressor_columns], 1)``,
    the constant being present only when ``intercept`` is true. ``direction``
    must have one entry per element of ``X``.
    """

    direction: np.ndarray
    common_regressor_columns: tuple = ()
    intercept: bool = True
    population_mode: str = "common"
    p: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "direction", _freeze(np.asarray(self.direction, dtype=np.float64).ravel()))
        object.__setattr__(self, "common_regressor_columns", tuple(int(c) for c in self.common_regressor_columns))

    def with_direction(self, direction) -> "ProblemSpec":
        return ProblemSpec(direction, self.common_regressor_columns, self.intercept,
                           self.population_mode, self.p)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError(list(self.violations))


def design_X(s2: RegressorSample, spec: ProblemSpec) -> np.ndarray:
    """Regressor matrix ``(X_o, X_c, 1)`` built from the regressor sample."""
    parts = [s2.Xo, s2.W[:, list(spec.common_regressor_columns)]]
    if spec.intercept:
        parts.append(np.ones((s2.m, 1)))
    return np.hstack(parts)


def design_W(W: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Common variables with the constant appended when the spec asks for it."""
    if spec.intercept:
        return np.hstack([W, np.ones((W.shape[0], 1))])
    return np.asarray(W)


def has_common_variables(s1: OutcomeSample, spec: ProblemSpec) -> bool:
    """True when ``W`` carries anything beyond the constant."""
    return s1.W.shape[1] > 0


def weighted_second_moment(A: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights / weights.sum()
    return (A * w[:, None]).T @ A


def is_singular(S: np.ndarray, rtol: float = SINGULAR_RTOL) -> bool:
    if S.size == 0:
        return False
    sv = np.linalg.svd(S, compute_uv=False)
    return not sv[-1] > rtol * sv[0]


def _check_weights(name, w, expected_len, out):
    if w.shape[0] != expected_len:
        out.append(f"{name}: weights have length {w.shape[0]}, expected {expected_len}")
        return
    if not np.all(np.isfinite(w)):
        out.append(f"{name}: non-finite weights")
    elif np.any(w < 0):
        out.append(f"{name}: negative weights")
    elif not w.sum() > 0:
        out.append(f"{name}: weights sum to zero")


def validate(problem: ProblemSpec, s1: OutcomeSample, s2: RegressorSample) -> ValidationReport:
    """Check the structural assumptions every estimator relies on.

    Returns a report listing every violation found; an empty list means the
    inputs are accepted downstream.
    """
    v = []
    n, m = s1.n, s2.m
    if s1.W.shape[0] != n:
        v.append(f"outcome sample: W has {s1.W.shape[0]} rows but y has {n}")
    if s2.W.shape[0] != m:
        v.append(f"regressor sample: W has {s2.W.shape[0]} rows but X_o has {m}")
    if n < 2:
        v.append(f"outcome sample: n={n} < 2")
    if s1.W.shape[1] != s2.W.shape[1]:
        v.append(f"dimension mismatch: W has {s1.W.shape[1]} columns in the outcome sample "
                 f"and {s2.W.shape[1]} in the regressor sample")
    if s1.columns is not None and s2.columns is not None and s1.columns != s2.columns:
        v.append(f"column designation mismatch: {s1.columns} vs {s2.columns}")
    if not (np.all(np.isfinite(s1.y)) and np.all(np.isfinite(s1.W))):
        v.append("outcome sample: non-finite values")
    if not (np.all(np.isfinite(s2.Xo)) and np.all(np.isfinite(s2.W))):
        v.append("regressor sample: non-finite values")
    _check_weights("outcome sample", s1.weights, n, v)
    _check_weights("regressor sample", s2.weights, m, v)

    d = problem.direction
    if problem.population_mode not in POPULATION_MODES:
        v.append(f"unknown population mode {problem.population_mode!r}")
    elif problem.population_mode != "common":
        if problem.p is None or not 0 < problem.p < 1:
            v.append(f"population mode {problem.population_mode!r} needs p=P(D=1) in (0, 1)")
    if not np.all(np.isfinite(d)) or not np.any(d != 0):
        v.append("zero direction")
    q = s2.W.shape[1]
    cols = problem.common_regressor_columns
    if len(set(cols)) != len(cols):
        v.append("duplicated common-regressor column index")
    if any(c < 0 or c >= q for c in cols):
        v.append(f"common-regressor column index out of range for q={q}")
        return ValidationReport(tuple(v))
    p = s2.Xo.shape[1] + len(cols) + int(problem.intercept)
    if d.shape[0] != p:
        v.append(f"dimension mismatch: direction has length {d.shape[0]}, regressors have p={p}")
    if m < p:
        v.append(f"regressor sample: m={m} < p={p}")
    if v:
        return ValidationReport(tuple(v))

    X = design_X(s2, problem)
    if is_singular(weighted_second_moment(X, s2.weights)):
        v.append("singular moment matrix E(XX')")
    W1 = design_W(s1.W, problem)
    W2 = design_W(s2.W, problem)
    if W1.shape[1] > 0:
        pooled = (n * weighted_second_moment(W1, s1.weights)
                  + m * weighted_second_moment(W2, s2.weights)) / (n + m)
        if is_singular(pooled):
            v.append("singular moment matrix E(WW')")
    return ValidationReport(tuple(v))


def require_valid(problem, s1, s2):
    validate(problem, s1, s2).raise_if_invalid()
