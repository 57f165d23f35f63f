"""Sharp bounds on linear regression coefficients when the outcome and the
regressors are observed in two different samples."""

from .bounds import (BoundsEstimate, bounds_no_common, bounds_weighted, bounds_with_common,
                     estimate_bounds, pacini_bounds)
from .core_types import (OutcomeSample, ProblemSpec, RegressorSample, SingularityError,
                         ValidationError, validate)
from .grouping import Grouping, build_grouping, default_k, grouping_from_labels
from .inference import (ConfidenceInterval, InfluenceSet, confidence_interval, influence_common,
                        influence_no_common, stoye_critical_value)
from .otcore import (EmpiricalQuantile, antitone_inner_product, quantile_inner_product,
                     wasserstein2)
from .pipeline import EstimationResult, estimate
from .regress import fwl_residualize, ols_fit

__version__ = "0.1.0"

__all__ = [
    "BoundsEstimate", "ConfidenceInterval", "EmpiricalQuantile", "EstimationResult", "Grouping",
    "InfluenceSet", "OutcomeSample", "ProblemSpec", "RegressorSample", "SingularityError",
    "ValidationError", "antitone_inner_product", "bounds_no_common", "bounds_weighted",
    "bounds_with_common", "build_grouping", "confidence_interval", "default_k", "estimate",
    "estimate_bounds", "fwl_residualize", "grouping_from_labels", "influence_common",
    "influence_no_common", "ols_fit", "pacini_bounds", "quantile_inner_product",
    "stoye_critical_value", "validate", "wasserstein2",
]
