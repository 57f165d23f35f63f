"""Weighted least squares and Frisch-Waugh-Lovell residualisation along a direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import (SINGULAR_RTOL, ProblemSpec, RegressorSample, SingularityError,
                         design_X)


def ols_fit(design, response, weights=None):
    """Weighted least squares.

    Parameters
    ----------
    design : ndarray, shape (n, k)
    response : ndarray, shape (n,)
    weights : ndarray, shape (n,), optional
        Nonnegative row weights; unit weights by default.

    Returns
    -------
    coef : ndarray, shape (k,)
    resid : ndarray, shape (n,)

    Raises
    ------
    SingularityError
        If the weighted design is rank deficient (relative singular-value
        cutoff ``SINGULAR_RTOL``).
    """
    X = np.asarray(design, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(response, dtype=np.float64).ravel()
    if weights is None:
        sw = np.ones(y.size)
    else:
        sw = np.sqrt(np.asarray(weights, dtype=np.float64).ravel())
    if X.shape[1] == 0:
        return np.zeros(0), y.copy()
    Xw = X * sw[:, None]
    U, s, Vt = np.linalg.svd(Xw, full_matrices=False)
    if s.size < X.shape[1] or not s[-1] > np.sqrt(SINGULAR_RTOL) * s[0]:
        # singular values of Xw are square roots of those of X'WX
        raise SingularityError("rank-deficient design in weighted least squares")
    coef = Vt.T @ ((U.T @ (y * sw)) / s)
    return coef, y - X @ coef


def complete_basis(d) -> np.ndarray:
    """Matrix ``M = [d | B]`` with ``B`` an orthonormal basis of the complement of ``d``."""
    d = np.asarray(d, dtype=np.float64).ravel()
    Q, _ = np.linalg.qr(d.reshape(-1, 1), mode="complete")
    return np.column_stack([d, Q[:, 1:]])


@dataclass(frozen=True)
class Residualization:
    """FWL residual ``eta_d`` of ``T_1`` on ``T_{-1}``, where ``T = M^{-1} X``."""

    d: np.ndarray
    M: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    mean_sq_eta: float
    T_rest: np.ndarray
    weights: np.ndarray

    def negated(self) -> "Residualization":
        """Residualisation for ``-d``; ``T_{-1}`` spans the same space so only signs flip."""
        M = self.M.copy()
        M[:, 0] = -M[:, 0]
        return Residualization(-self.d, M, -self.gamma, -self.eta, self.mean_sq_eta,
                               self.T_rest, self.weights)


def residualize_matrix(X, d, weights=None, M=None) -> Residualization:
    X = np.asarray(X, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).ravel()
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if M is None:
        M = complete_basis(d)
    if not np.allclose(M[:, 0], d):
        raise ValueError("first column of M must equal d")
    try:
        T = np.linalg.solve(M, X.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularityError("basis completion M is singular") from exc
    T1, T_rest = T[:, 0], T[:, 1:]
    gamma, eta = ols_fit(T_rest, T1, w)
    mean_sq = float(np.sum(w * eta ** 2) / w.sum())
    return Residualization(d, M, gamma, eta, mean_sq, T_rest, w)


def fwl_residualize(s2: RegressorSample, spec: ProblemSpec, M=None) -> Residualization:
    """Residualise the regressor sample along ``spec.direction``.

    ``M`` optionally overrides the default QR basis completion; ``eta`` does
    not depend on that choice.
    """
    X = design_X(s2, spec)
    return residualize_matrix(X, spec.direction, s2.weights, M)
