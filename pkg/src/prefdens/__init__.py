"""Density estimation, structure discovery, and elicitation for factored utilities."""

from prefdens.basis import (
    Basis,
    BasisFunction,
    ClusterStructure,
    Domain,
    Outcome,
    Variable,
    basis_count,
    build_basis,
    design_matrix,
    enumerate_outcomes,
    project_exact,
    single_var_basis,
)
from prefdens.elicit import (
    Question,
    Session,
    next_question,
    outlier_score,
    predict,
    replay,
    select_questions_rref,
    start_session,
    stop_check,
    update_posterior,
)
from prefdens.em import (
    EMConfig,
    MixtureModel,
    PriorConfig,
    TypeModel,
    UtilityDatabase,
    UtilityRecord,
    e_step,
    em_fit,
    log_likelihood,
    m_step,
)
from prefdens.gaussian import (
    Dirichlet,
    Gaussian,
    NormalWishart,
    WishartScalar,
    condition,
    dirichlet_log_marginal,
    dirichlet_mean,
    dirichlet_update,
    nw_log_marginal_likelihood,
    nw_marginalize,
    nw_update,
    wishart_scalar_marginalize,
    wishart_scalar_update,
)
from prefdens.projection import classify, ls_project, map_project, posterior_weights
from prefdens.search import Candidate, SearchConfig, cs_score, hill_climb, neighbors
from prefdens.synth import (
    GeneratorSpec,
    make_generator_spec,
    run_learning_curve,
    run_projection_comparison,
    run_structure_recovery,
    sample_database,
)

__all__ = [
    "Basis",
    "BasisFunction",
    "Candidate",
    "ClusterStructure",
    "Dirichlet",
    "Domain",
    "EMConfig",
    "Gaussian",
    "GeneratorSpec",
    "MixtureModel",
    "NormalWishart",
    "Outcome",
    "PriorConfig",
    "Question",
    "SearchConfig",
    "Session",
    "TypeModel",
    "UtilityDatabase",
    "UtilityRecord",
    "Variable",
    "WishartScalar",
    "basis_count",
    "build_basis",
    "classify",
    "condition",
    "cs_score",
    "design_matrix",
    "dirichlet_log_marginal",
    "dirichlet_mean",
    "dirichlet_update",
    "e_step",
    "em_fit",
    "enumerate_outcomes",
    "hill_climb",
    "log_likelihood",
    "ls_project",
    "m_step",
    "make_generator_spec",
    "map_project",
    "neighbors",
    "next_question",
    "nw_log_marginal_likelihood",
    "nw_marginalize",
    "nw_update",
    "outlier_score",
    "posterior_weights",
    "predict",
    "project_exact",
    "replay",
    "run_learning_curve",
    "run_projection_comparison",
    "run_structure_recovery",
    "sample_database",
    "select_questions_rref",
    "start_session",
    "stop_check",
    "update_posterior",
    "wishart_scalar_marginalize",
    "wishart_scalar_update",
]

__version__ = "0.1.0"
