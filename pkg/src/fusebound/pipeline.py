"""End-to-end estimation: grouping, bounds, variances of both endpoints, confidence interval."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .bounds import BoundsEstimate, common_residuals, estimate_bounds
from .core_types import OutcomeSample, ProblemSpec, RegressorSample, has_common_variables, require_valid
from .grouping import Grouping, build_grouping, default_k
from .inference import ConfidenceInterval, InfluenceSet, confidence_interval, influence


@dataclass(frozen=True)
class EstimationResult:
    bounds: BoundsEstimate
    infl_lower: InfluenceSet
    infl_upper: InfluenceSet
    ci: ConfidenceInterval
    grouping: Optional[Grouping]


def make_grouping(s1, s2, spec, K: Union[int, str] = "auto", seed: int = 0) -> Optional[Grouping]:
    """Default grouping of ``W``; ``None`` when only the constant is common."""
    if not has_common_variables(s1, spec):
        return None
    if K == "auto" or K is None:
        K = default_k(s1.n, s2.m)
    cr = common_residuals(s1, s2, spec)
    return build_grouping(s1, s2, cr.nu_Y, cr.nu_d, int(K), seed=seed, spec=spec)


def estimate(s1: OutcomeSample, s2: RegressorSample, spec: ProblemSpec, K: Union[int, str] = "auto",
             alpha: float = 0.05, ci_method: Optional[str] = None, seed: int = 0,
             grouping: Optional[Grouping] = None) -> EstimationResult:
    """Bounds on ``d'b`` with a confidence interval at level ``1 - alpha``.

    ``ci_method`` defaults to ``one_sided_z`` without common variables and to
    ``stoye`` with them.
    """
    require_valid(spec, s1, s2)
    common = has_common_variables(s1, spec)
    if grouping is None and common:
        grouping = make_grouping(s1, s2, spec, K, seed)
    est = estimate_bounds(s1, s2, spec, grouping)
    lo = influence(s1, s2, spec, grouping, est, "lower")
    up = influence(s1, s2, spec, grouping, est, "upper")
    method = ci_method or ("stoye" if common else "one_sided_z")
    return EstimationResult(est, lo, up, confidence_interval(est, lo, up, alpha, method), grouping)
