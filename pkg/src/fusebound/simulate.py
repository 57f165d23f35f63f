"""Simulation designs, population (oracle) identified sets and Monte Carlo studies.

The main design draws ``W_a ~ U[0,1]``, ``X_c ~ N(0,1)``, ``eta ~ N(0, s_eta^2)``,
``eps ~ N(0, s_eps^2)`` and sets

    X_o = a1 X_c + a2 W_a + (1 + d1 W_a) eta
    Y   = b1 X_o + b2 X_c + d2 W_a + eps.

Three observation schemes are considered: nothing common but the constant
(panel 1), ``X_c`` common and in the regression (panel 2), and ``X_c`` plus
the auxiliary ``W_a`` common (panel 3).
"""

from __future__ import annotations

import functools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .bounds import bounds_no_common, bounds_with_common, pacini_bounds
from .core_types import OutcomeSample, ProblemSpec, RegressorSample
from .grouping import grouping_from_labels
from .pipeline import estimate

OBSERVED = ("none", "xc", "xc_wa")
PANELS = {1: "none", 2: "xc", 3: "xc_wa"}
COVERAGE_GRID = 41
ORACLE_SEED = 20240601


@dataclass(frozen=True)
class DgpConfig:
    a1: float = 1.0
    a2: float = 10.0
    d1: float = 1.0
    d2: float = 0.25
    b1: float = 1.0
    b2: float = 1.0
    sigma_eta: float = 1.0
    sigma_eps: float = 4.0
    n: int = 800
    m: Optional[int] = None
    observed: str = "xc_wa"
    seed: int = 0

    def __post_init__(self):
        if self.observed not in OBSERVED:
            raise ValueError(f"observed must be one of {OBSERVED}")
        if self.sigma_eta < 0 or self.sigma_eps < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.m is None:
            object.__setattr__(self, "m", self.n)

    @classmethod
    def panel(cls, k: int, **kw) -> "DgpConfig":
        return cls(observed=PANELS[k], **kw)

    def population_key(self):
        """Parameters that determine the population law (not sizes or seeds)."""
        return (self.a1, self.a2, self.d1, self.d2, self.b1, self.b2, self.sigma_eta,
                self.sigma_eps, self.observed)


def rng_for(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for replication ``index``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def draw_population(cfg: DgpConfig, size: int, rng: np.random.Generator) -> dict:
    Wa = rng.uniform(0.0, 1.0, size)
    Xc = rng.standard_normal(size)
    eta = cfg.sigma_eta * rng.standard_normal(size)
    eps = cfg.sigma_eps * rng.standard_normal(size)
    Xo = cfg.a1 * Xc + cfg.a2 * Wa + (1 + cfg.d1 * Wa) * eta
    Y = cfg.b1 * Xo + cfg.b2 * Xc + cfg.d2 * Wa + eps
    return {"Wa": Wa, "Xc": Xc, "Xo": Xo, "Y": Y}


def _common_block(cfg: DgpConfig, pop: dict) -> np.ndarray:
    if cfg.observed == "none":
        return np.empty((pop["Y"].size, 0))
    if cfg.observed == "xc":
        return pop["Xc"][:, None]
    return np.column_stack([pop["Xc"], pop["Wa"]])


def problem_for(cfg: DgpConfig) -> ProblemSpec:
    """Target: the coefficient of ``X_o`` in the regression with a constant."""
    if cfg.observed == "none":
        return ProblemSpec(np.array([1.0, 0.0]))
    return ProblemSpec(np.array([1.0, 0.0, 0.0]), common_regressor_columns=(0,))


def draw_dgp(cfg: DgpConfig, replication_index: int):
    """Two independent samples: ``(y, W)`` of size ``n`` and ``(X_o, W)`` of size ``m``."""
    rng = rng_for(cfg.seed, replication_index)
    p1 = draw_population(cfg, cfg.n, rng)
    p2 = draw_population(cfg, cfg.m, rng)
    cols = ("Xc", "Wa")[:_common_block(cfg, p1).shape[1]]
    return (OutcomeSample(p1["Y"], _common_block(cfg, p1), columns=cols),
            RegressorSample(p2["Xo"][:, None], _common_block(cfg, p2), columns=cols))


def true_coefficient(cfg: DgpConfig) -> float:
    """Population coefficient of ``X_o`` in the linear projection, from exact moments."""
    v_eta = cfg.sigma_eta ** 2 * (1 + cfg.d1 + cfg.d1 ** 2 / 3)
    # covariance of (X_o, X_c, W_a)
    S = np.array([
        [cfg.a1 ** 2 + cfg.a2 ** 2 / 12 + v_eta, cfg.a1, cfg.a2 / 12],
        [cfg.a1, 1.0, 0.0],
        [cfg.a2 / 12, 0.0, 1 / 12],
    ])
    coef = np.array([cfg.b1, cfg.b2, cfg.d2])
    cov_y = S @ coef
    idx = [0] if cfg.observed == "none" else [0, 1]
    return float(np.linalg.solve(S[np.ix_(idx, idx)], cov_y[idx])[0])


def analytic_panel3_bounds(cfg: DgpConfig):
    """Exact identified interval when ``(X_c, W_a)`` are common.

    Given ``W``, ``nu_d = (1 + d1 W_a) eta`` and ``nu_Y = b1 nu_d + eps`` are
    centred Gaussians, so the cell-wise quantile product is the product of
    their conditional standard deviations.
    """
    s, se, d1, b1 = cfg.sigma_eta, cfg.sigma_eps, cfg.d1, cfg.b1
    E2 = cfg.a2 ** 2 / 12 + s ** 2 * (1 + d1 + d1 ** 2 / 3)
    cross = cfg.a2 * (b1 * cfg.a2 + cfg.d2) / 12
    f = lambda u: s * abs(1 + d1 * u) * math.sqrt(b1 ** 2 * s ** 2 * (1 + d1 * u) ** 2 + se ** 2)
    I, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    return (cross - I) / E2, (cross + I) / E2


class _GaussianMixture:
    """Law of ``mu(U) + s(U) Z`` with ``U ~ U[0,1]`` and ``Z`` standard normal."""

    def __init__(self, mu, s, nodes=96):
        x, w = np.polynomial.legendre.leggauss(nodes)
        u = 0.5 * (x + 1)
        self.w = 0.5 * w
        self.mu = np.asarray(mu(u), dtype=np.float64) * np.ones_like(u)
        self.s = np.asarray(s(u), dtype=np.float64) * np.ones_like(u)

    def cdf(self, x):
        return ndtr((x[:, None] - self.mu) / self.s) @ self.w

    def quantile(self, t, iters=80):
        lo = np.full(t.shape, (self.mu - 12 * self.s).min())
        hi = np.full(t.shape, (self.mu + 12 * self.s).max())
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def _mixture_products(A: _GaussianMixture, B: _GaussianMixture, zmax=9.0, npts=3601):
    """Comonotone and antitone ``E[AB]`` via ``t = Phi(z)`` and the trapezoid rule."""
    z = np.linspace(-zmax, zmax, npts)
    t = ndtr(z)
    qa, qb = A.quantile(t), B.quantile(t)
    phi = np.exp(-0.5 * z ** 2) / math.sqrt(2 * math.pi)
    return (integrate.trapezoid(qa * qb * phi, z), integrate.trapezoid(qa * qb[::-1] * phi, z))


def population_identified_set(cfg: DgpConfig):
    """Identified interval computed by numerical integration, without simulation.

    Given ``W_a = u`` every residual entering the bounds is Gaussian with
    mean and variance depending on ``u`` only, so its marginal law is a
    continuous Gaussian mixture whose quantile function is inverted
    numerically. Panel 3 reduces to :func:`analytic_panel3_bounds`.
    """
    if cfg.observed == "xc_wa":
        return analytic_panel3_bounds(cfg)
    a1, a2, d1, d2, b1, b2 = cfg.a1, cfg.a2, cfg.d1, cfg.d2, cfg.b1, cfg.b2
    s, se = cfg.sigma_eta, cfg.sigma_eps
    v_het = lambda u: s ** 2 * (1 + d1 * u) ** 2
    # with X_c in the regression its loading drops out of both residuals
    c_o = a1 if cfg.observed == "none" else 0.0
    c_y = b1 * a1 + b2 if cfg.observed == "none" else 0.0
    eta = _GaussianMixture(lambda u: a2 * (u - 0.5), lambda u: np.sqrt(c_o ** 2 + v_het(u)))
    nuy = _GaussianMixture(lambda u: (b1 * a2 + d2) * (u - 0.5),
                           lambda u: np.sqrt(c_y ** 2 + b1 ** 2 * v_het(u) + se ** 2))
    E2 = c_o ** 2 + a2 ** 2 / 12 + s ** 2 * (1 + d1 + d1 ** 2 / 3)
    up, lo = _mixture_products(eta, nuy)
    return lo / E2, up / E2


@dataclass(frozen=True)
class OracleSet:
    lower: float
    upper: float
    N: int
    analytic: Optional[tuple] = None


def oracle_identified_set(cfg: DgpConfig, N_big: int = 10 ** 6, seed: int = ORACLE_SEED,
                          bins: int = 200) -> OracleSet:
    """Population bounds approximated by a single draw of size ``N_big``.

    The draw stands in for the population in both samples. Without ``W_a``
    the conditional laws of the residuals do not depend on ``W``, so a single
    cell is sharp. With ``W_a`` the cells are ``bins`` equal-probability
    intervals of ``W_a``, and the closed form is returned as well.
    """
    if N_big < 10 ** 5:
        raise ValueError("N_big must be at least 1e5")
    pop = draw_population(cfg, N_big, rng_for(seed, 0))
    W = _common_block(cfg, pop)
    s1 = OutcomeSample(pop["Y"], W)
    s2 = RegressorSample(pop["Xo"][:, None], W)
    spec = problem_for(cfg)
    if cfg.observed == "none":
        est = bounds_no_common(s1, s2, spec)
        return OracleSet(est.lower, est.upper, N_big)
    if cfg.observed == "xc":
        est = bounds_with_common(s1, s2, spec)
        return OracleSet(est.lower, est.upper, N_big)
    cells = np.minimum((pop["Wa"] * bins).astype(np.intp), bins - 1)
    g = grouping_from_labels(cells, cells, method="wa_bins")
    est = bounds_with_common(s1, s2, spec, g)
    return OracleSet(est.lower, est.upper, N_big, analytic_panel3_bounds(cfg))


@functools.lru_cache(maxsize=32)
def _cached_truth(key):
    lo, up = population_identified_set(DgpConfig(*key[:8], observed=key[8]))
    return float(lo), float(up)


def true_identified_set(cfg: DgpConfig):
    """Cached :func:`population_identified_set`."""
    return _cached_truth(cfg.population_key())


@dataclass
class MonteCarloReport:
    observed: str
    n: int
    m: int
    K: object
    replications: int
    failures: int
    alpha: float
    ci_method: str
    true_lower: float
    true_upper: float
    avg_lower: float
    avg_upper: float
    avg_ci_lower: float
    avg_ci_upper: float
    excess_length: float
    min_coverage: float
    wall_time: float
    draws: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        out = asdict(self)
        out.pop("draws")
        return out


def _one_replication(args):
    cfg, rep, alpha, K, ci_method = args
    s1, s2 = draw_dgp(cfg, rep)
    try:
        r = estimate(s1, s2, problem_for(cfg), K=K, alpha=alpha, ci_method=ci_method, seed=rep)
    except (ValueError, np.linalg.LinAlgError):
        return None
    return (r.bounds.lower, r.bounds.upper, r.ci.lower, r.ci.upper, r.ci.se_lower, r.ci.se_upper,
            r.ci.method)


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("FUSEBOUND_WORKERS", "1"))
    return max(1, int(workers))


def run_monte_carlo(cfg: DgpConfig, replications: int, alpha: float = 0.05, K_override=None,
                    workers: Optional[int] = None, ci_method: Optional[str] = None,
                    truth: Optional[tuple] = None) -> MonteCarloReport:
    """Repeated estimation on independent draws; coverage is the minimum over a
    41-point grid spanning the true identified set.

    Replication ``r`` always uses the stream ``(cfg.seed, r)`` so results do
    not depend on ``workers``. Replications that fail numerically are counted
    in ``failures`` and excluded.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    t0 = time.perf_counter()
    K = "auto" if K_override is None else K_override
    lo_true, up_true = truth if truth is not None else true_identified_set(cfg)
    tasks = [(cfg, r, alpha, K, ci_method) for r in range(replications)]
    workers = resolve_workers(workers)
    if workers == 1:
        results = [_one_replication(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_replication, tasks, chunksize=max(1, replications // (4 * workers))))
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if not ok:
        raise RuntimeError("every replication failed")
    arr = np.array([r[:6] for r in ok])
    lo, up, cl, cu = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    grid = np.linspace(lo_true, up_true, COVERAGE_GRID)
    cover = ((cl[:, None] <= grid[None, :]) & (grid[None, :] <= cu[:, None])).mean(axis=0)
    return MonteCarloReport(
        observed=cfg.observed, n=cfg.n, m=cfg.m, K=K, replications=len(ok), failures=failures,
        alpha=alpha, ci_method=ok[0][6], true_lower=float(lo_true), true_upper=float(up_true),
        avg_lower=float(lo.mean()), avg_upper=float(up.mean()), avg_ci_lower=float(cl.mean()),
        avg_ci_upper=float(cu.mean()), excess_length=float((cu - cl).mean() - (up_true - lo_true)),
        min_coverage=float(cover.min()), wall_time=time.perf_counter() - t0,
        draws={"lower": lo, "upper": up, "ci_lower": cl, "ci_upper": cu, "se_lower": arr[:, 4],
               "se_upper": arr[:, 5], "coverage": cover, "grid": grid})


def pacini_ratio_study(rho_grid: Sequence[float], N: int = 10 ** 5, seed: int = 0,
                       log_y_var: float = 2.0):
    """Ratio of the outer-bound width to the sharp width for ``d = (1, 0)``.

    ``log Y ~ N(0, log_y_var)`` and ``(X_1, X_2)`` standard bivariate normal
    with correlation ``rho``; no constant in the regression. Returns a list of
    dicts with keys ``rho``, ``sharp_width``, ``pacini_width``, ``ratio``.
    """
    rows = []
    spec = ProblemSpec(np.array([1.0, 0.0]), intercept=False)
    for i, rho in enumerate(rho_grid):
        if not 0 <= rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        rng = rng_for(seed, i)
        y = np.exp(math.sqrt(log_y_var) * rng.standard_normal(N))
        z = rng.standard_normal((N, 2))
        X = np.column_stack([z[:, 0], rho * z[:, 0] + math.sqrt(1 - rho ** 2) * z[:, 1]])
        s1 = OutcomeSample(y, np.empty((N, 0)))
        s2 = RegressorSample(X, np.empty((N, 0)))
        sharp = bounds_no_common(s1, s2, spec)
        plo, pup = pacini_bounds(s1, s2, spec)
        rows.append({"rho": float(rho), "sharp_width": sharp.width, "pacini_width": pup - plo,
                     "ratio": (pup - plo) / sharp.width})
    return rows


def pacini_ratio_theory(rho: float) -> float:
    """Population ratio ``sqrt((1 + rho) / (1 - rho))`` for Gaussian regressors."""
    return math.sqrt((1 + rho) / (1 - rho))


def gaussian_auxiliary_samples(rho_o: float, rho_y: float, n: int, m: Optional[int] = None,
                               seed: int = 0):
    """Standard normal ``(W_a, X_o)`` and ``(W_a, Y)`` with correlations ``rho_o`` and ``rho_y``.

    ``W_a`` is auxiliary: common to both samples but not a regressor.
    Returns ``(s1, s2, spec)`` targeting the slope on ``X_o``.
    """
    m = n if m is None else m
    rng = rng_for(seed, 0)
    w1, w2 = rng.standard_normal(n), rng.standard_normal(m)
    y = rho_y * w1 + math.sqrt(1 - rho_y ** 2) * rng.standard_normal(n)
    xo = rho_o * w2 + math.sqrt(1 - rho_o ** 2) * rng.standard_normal(m)
    s1 = OutcomeSample(y, w1[:, None], columns=("Wa",))
    s2 = RegressorSample(xo[:, None], w2[:, None], columns=("Wa",))
    return s1, s2, ProblemSpec(np.array([1.0, 0.0]))


def gaussian_auxiliary_bounds(rho_o: float, rho_y: float):
    """``rho_o rho_y -/+ sqrt((1 - rho_o^2)(1 - rho_y^2))``."""
    r = math.sqrt((1 - rho_o ** 2) * (1 - rho_y ** 2))
    return rho_o * rho_y - r, rho_o * rho_y + r


def gaussian_common_samples(rho_o: float, rho_y: float, n: int, m: Optional[int] = None,
                            seed: int = 0):
    """As :func:`gaussian_auxiliary_samples` but the common variable is a regressor."""
    s1, s2, _ = gaussian_auxiliary_samples(rho_o, rho_y, n, m, seed)
    return s1, s2, ProblemSpec(np.array([1.0, 0.0, 0.0]), common_regressor_columns=(0,))


def gaussian_common_bounds(rho_o: float, rho_y: float):
    """``-/+ sqrt((1 - rho_y^2) / (1 - rho_o^2))``."""
    r = math.sqrt((1 - rho_y ** 2) / (1 - rho_o ** 2))
    return -r, r


def with_panel(cfg: DgpConfig, panel: int) -> DgpConfig:
    return replace(cfg, observed=PANELS[panel])
