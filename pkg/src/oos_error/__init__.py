"""Out-of-source error estimation for multi-source data.

A new observation from source ``j`` is scored against decision rules
trained on each of the other sources; the out-of-source (OOS) error
averages that loss over sources. This package provides its unbiased
estimator, normal-theory closed forms for its mean and variance, a seeded
Monte Carlo harness, and tools around (the lack of) unbiased variance
estimation.
"""

from .closed_form import (
    MomentComponents,
    NormalSourceParams,
    bivariate_square_cov,
    folded_normal_mean,
    normal_components_squared,
    normal_cvs_squared,
    normal_oos_absolute,
    normal_oos_squared,
    theoretical_variance,
)
from .core import (
    ABSOLUTE,
    MEAN,
    SQUARED,
    DecisionRule,
    LossFunction,
    MultiSourceDataset,
    Proportions,
    dataset_from_records,
    fit_rule,
    proportions,
    read_csv,
)
from .estimator import OosEstimate, PairwiseErrorMatrix, cvs_estimate, oos_estimate, pairwise_errors
from .exceptions import OosError
from .kernels import BACKEND
from .simulation import (
    DistributionSpec,
    ScenarioConfig,
    SimulationReport,
    mc_moment_components,
    reproduce_table,
    run_monte_carlo,
    sample_dataset,
    table_config,
)
from .variance_tools import (
    FeasibilityResult,
    MomentTarget,
    bootstrap_variance,
    moment_feasibility,
    pathological_pmf,
    pathological_sequence,
    sample_variance_s2,
    var_s2_study,
)

__version__ = "0.1.0"
