"""Discrete compound Poisson processes.

Exact laws (:mod:`dcpp.core`), simulation (:mod:`dcpp.sampler`), tail bounds
with Monte Carlo verification (:mod:`dcpp.concentration`) and weighted-lasso
negative binomial regression (:mod:`dcpp.regression`).
"""
from .core import (
    DcpParams,
    Moments,
    NbParams,
    PartitionBudgetError,
    jump_mean,
    mgf_eval,
    moments,
    nb_pmf,
    nb_to_dcp,
    pgf_eval,
    pmf_matrix,
    pmf_partition,
    pmf_vector,
)
from .rng import RngStream, as_generator
from .sampler import (
    Cell,
    PointPattern,
    Region,
    campbell_check,
    campbell_closed_form,
    sample_dcp_rv,
    sample_dcpp,
    sample_nb_direct,
    stochastic_integral,
)
from .concentration import (
    TailBoundSpec,
    TailReport,
    bound_corollary31,
    bound_remark,
    bound_thm31,
    bound_thm32,
    dominance_suite,
    empirical_tail,
)
from .regression import (
    ExperimentConfig,
    FitResult,
    KktReport,
    NbRegressionProblem,
    SolverConfig,
    compute_weights,
    fit_weighted_lasso,
    kkt_check,
    kkt_probability_experiment,
    nb_embedding,
    nb_neg_loglik,
    nb_score,
)

__all__ = [
    "DcpParams",
    "Moments",
    "NbParams",
    "PartitionBudgetError",
    "jump_mean",
    "mgf_eval",
    "moments",
    "nb_pmf",
    "nb_to_dcp",
    "pgf_eval",
    "pmf_matrix",
    "pmf_partition",
    "pmf_vector",
    "Cell",
    "PointPattern",
    "Region",
    "campbell_check",
    "campbell_closed_form",
    "sample_dcp_rv",
    "sample_dcpp",
    "sample_nb_direct",
    "stochastic_integral",
    "TailBoundSpec",
    "TailReport",
    "bound_corollary31",
    "bound_remark",
    "bound_thm31",
    "bound_thm32",
    "dominance_suite",
    "empirical_tail",
    "ExperimentConfig",
    "FitResult",
    "KktReport",
    "NbRegressionProblem",
    "SolverConfig",
    "compute_weights",
    "fit_weighted_lasso",
    "kkt_check",
    "kkt_probability_experiment",
    "nb_embedding",
    "nb_neg_loglik",
    "nb_score",
    "RngStream",
    "as_generator",
]

__version__ = "0.1.0"
