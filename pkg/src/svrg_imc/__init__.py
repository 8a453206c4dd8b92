"""Variance-reduced stochastic solvers for low-rank inductive matrix completion.

Recovers a target matrix l_star = x_left @ m_star @ x_right.T from a sparse
set of observed entries, given the orthonormal feature matrices.  The
package provides a spectral initializer, a variance-reduced stochastic
solver with constraint monitoring, gradient-descent and alternating
least-squares baselines, synthetic-experiment runners, and a deterministic
command-line harness.
"""

__version__ = "0.1.0"

from .experiments import (
    ConvergenceConfig,
    DatasetSpec,
    PhaseConfig,
    run_convergence_study,
    run_convergence_trial,
    run_phase_cell,
    run_phase_transition,
)
from .initialization import RankDeficiencyError, initialize, initialize_with_spectrum
from .linalg import (
    AlignmentResult,
    ConvergenceError,
    SvdTriplet,
    frobenius_norm,
    orthonormalize,
    procrustes_align,
    project_pattern,
    spectral_norm,
    truncated_svd,
    two_inf_norm,
)
from .metrics import distance_to_truth, relative_error
from .objective import (
    EpochReference,
    Factorization,
    GradientWorkspace,
    grad_full,
    grad_subset,
    loss_full,
    make_epoch_reference,
    objective_full,
    objective_subset,
    penalty,
    semi_stochastic_grad,
)
from .problem import (
    Features,
    GroundTruth,
    ObservationSet,
    Partition,
    ProblemInstance,
    bernoulli_sample,
    derived_seeds,
    fixed_sample,
    generate_instance,
    incoherence_mu,
    partition_observations,
    rng_from,
    sample_count_for,
)
from .solvers import (
    DivergenceError,
    ProjectionError,
    EpochRecord,
    SolverReport,
    SvrgConfig,
    am_imc_solve,
    constraint_radii,
    constraint_violations,
    default_step_size,
    estimate_spectrum,
    gd_imc_solve,
    lrsvrg_solve,
    project_constraint,
    solve,
)

__all__ = [
    "__version__",
    # linalg
    "AlignmentResult", "ConvergenceError", "SvdTriplet", "frobenius_norm",
    "orthonormalize", "procrustes_align", "project_pattern", "spectral_norm",
    "truncated_svd", "two_inf_norm",
    # problem
    "Features", "GroundTruth", "ObservationSet", "Partition",
    "ProblemInstance", "bernoulli_sample", "derived_seeds", "fixed_sample",
    "generate_instance", "incoherence_mu", "partition_observations",
    "rng_from", "sample_count_for",
    # objective
    "EpochReference", "Factorization", "GradientWorkspace", "grad_full",
    "grad_subset", "loss_full", "make_epoch_reference", "objective_full",
    "objective_subset", "penalty", "semi_stochastic_grad",
    # initialization
    "RankDeficiencyError", "initialize", "initialize_with_spectrum",
    # solvers
    "DivergenceError", "ProjectionError", "EpochRecord", "SolverReport", "SvrgConfig",
    "am_imc_solve", "constraint_radii", "constraint_violations",
    "default_step_size", "estimate_spectrum", "gd_imc_solve", "lrsvrg_solve",
    "project_constraint", "solve",
    # metrics & experiments
    "distance_to_truth", "relative_error", "ConvergenceConfig", "DatasetSpec",
    "PhaseConfig", "run_convergence_study", "run_convergence_trial",
    "run_phase_cell", "run_phase_transition",
]
