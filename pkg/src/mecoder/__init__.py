"""Batch out-of-distribution detection by codelength comparison.

A batch is scored by coding it twice: once under the known default Gaussian,
once under a weighted family of maximum-entropy universal coders (sparse
Gaussians along a graphical-lasso path, a Gamma radial coder, and 1-D
histogram coders). A positive score means some universal description beats
the default, i.e. the batch looks out-of-distribution.
"""
from .bench import (
    BenchResult,
    ExperimentConfig,
    GapCheckResult,
    auroc,
    hash64,
    mle_gap_chi2_check,
    run_experiment,
)
from .coders import (
    Batch,
    CoderReport,
    cdf_transform,
    default_gaussian_codelength,
    gamma_mle,
    gamma_report,
    histogram_codelength,
    histogram_weighted_score,
    kt_bits,
    universal_gaussian_reports,
)
from .combine import DetectionResult, DetectorConfig, detect, select_combine, weighted_combine
from .covsel import (
    CondIndepGraph,
    ConvergenceError,
    GaussianModel,
    SampleCov,
    covariance_select,
    default_lambda_grid,
    glasso,
    glasso_path,
    graph_codelength,
)
from .specfun import (
    LOG_STAR_CONSTANT,
    Bits,
    chi2_cdf,
    digamma,
    entropy,
    ln_gamma,
    log_binomial,
    log_star,
)
from .synth import (
    BASE_FAMILIES,
    Scenario,
    analytic_default_model,
    base_means,
    base_variances,
    build_scenario,
    fitted_default_model,
    null_scenario,
    sample_batch,
)

__version__ = "0.1.0"
