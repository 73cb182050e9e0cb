"""Partial covariance estimation for outlier-contaminated array data.

Partial estimators fit a covariance model to the fraction ``p`` of the
samples that the model itself finds most likely, iterating until the
selected set stops changing.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    CalibrationError,
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    ParseError,
    PartialCovError,
    SingularMatrixError,
    StabilityError,
)
from .estimators import (  # noqa: E402
    ToeplitzModel,
    burg_multisegment,
    reverse_levinson,
    scm,
    trench_inverse,
)
from .numerics import scale_bias  # noqa: E402
from .partial import (  # noqa: E402
    CG,
    GAUSSIAN,
    EstimateReport,
    PartialConfig,
    WeightFunction,
    cg_cov,
    exact_partial_oracle,
    huber_weight,
    p_bt,
    p_tyler,
    partial_burg,
    partial_scm,
    partial_wrap,
    pcg_cov,
    pm_est,
    pm_exp_cov,
    tyler_weight,
)
from .detection import DetectorSpec, calibrate_threshold  # noqa: E402
from .simulation import Scenario, run_scenario  # noqa: E402

__all__ = [
    "# noqa: E402",
    "BudgetError",
    "burg_multisegment",
    "calibrate_threshold",
    "CalibrationError",
    "CG",
    "cg_cov",
    "ConfigurationError",
    "DegenerateInputError",
    "DetectorSpec",
    "DomainError",
    "EstimateReport",
    "exact_partial_oracle",
    "GAUSSIAN",
    "huber_weight",
    "p_bt",
    "p_tyler",
    "ParseError",
    "partial_burg",
    "partial_scm",
    "partial_wrap",
    "PartialConfig",
    "PartialCovError",
    "pcg_cov",
    "pm_est",
    "pm_exp_cov",
    "reverse_levinson",
    "run_scenario",
    "scale_bias",
    "Scenario",
    "scm",
    "SingularMatrixError",
    "StabilityError",
    "ToeplitzModel",
    "trench_inverse",
    "tyler_weight",
    "WeightFunction",
]
