"""Debiased and threshold ridge regression with dependent wild bootstrap inference."""

from .bootstrap import (
    BootstrapRun,
    Kernel,
    MultiplierFactor,
    dwb_replicate,
    gaussian_kernel,
    multiplier_factor,
    run_bootstrap,
    sample_quantile,
    tabulated_kernel,
)
from .errors import InputError, NumericalError, ThsdebError
from .estimator import (
    CombinationEstimate,
    RidgeConfig,
    RidgeFit,
    combine,
    debias,
    ridge_star,
    threshold_fit,
)
from .inference import (
    ConfidenceRegion,
    GaussianOracle,
    TestResult,
    confidence_region,
    gaussian_H_quantile,
    hypothesis_test,
)
from .linmodel import DesignMatrix, decompose, min_singular_value
from .tuning import BandwidthResult, TuneGrid, cv_select, select_bandwidth

__version__ = "0.1.0"
