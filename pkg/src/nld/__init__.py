"""Numerical laboratory for nonlocal diffusion blocks.

The package builds pairwise affinity kernels over feature fields,
normalizes them into stochastic operators, evolves linear and
state-dependent nonlocal dynamics with stability and decay checks,
classifies learned weight spectra with a from-scratch symmetric
eigensolver, and trains a small differentiable network whose residual
trunk can host either nonlocal stage formulation.  The ``nld`` console
script drives seeded, config-file experiments over all of it.
"""

from .dynamics import (
    BLOWUP_LIMIT,
    DecayRateFit,
    MarkovStepper,
    MeanPreservationReport,
    OriginalStepper,
    ProposedStepper,
    StabilityVerdict,
    StageWeights,
    SteadyStateReport,
    StepStats,
    TrajectoryRecord,
    VarianceDecayReport,
    cfl_verdict,
    estimate_decay_rate,
    evolve,
    poincare_constant,
    reverse_evolve,
    steady_state_check_original,
    step_original,
    step_proposed,
    variance_dissipation,
    verify_mean_preservation,
    verify_variance_decay,
)
from .errors import (
    BlowUpError,
    ConvergenceError,
    DegenerateRowError,
    DivergenceError,
    InsufficientDataError,
    NldError,
    NonFiniteError,
)
from .fields import FeatureField, load_matrix_csv, save_matrix_csv
from .kernels import (
    DIRAC_DELTA,
    DOT_PRODUCT,
    EMBEDDED,
    FLAG_TOL,
    GAUSSIAN,
    RBF,
    AffinityKernelSpec,
    KernelMatrix,
    build_kernel_matrix,
    eval_affinity,
    frobenius_norm,
    median_bandwidth,
    normalize_rows,
    sinkhorn_normalize,
    symmetric_stochastic_kernel,
)
from .net import (
    EpochStats,
    Hyper,
    NetworkConfig,
    StageConfig,
    SyntheticTask,
    TrainingHistory,
    agreement_count,
    backward,
    checkpoint_bytes,
    checkpoint_from_bytes,
    extract_stage_spectra,
    forward,
    generate_task,
    init_params,
    label_from_field,
    loss_for_sample,
    param_names,
    train,
)
from .operators import OperatorMatrix, apply_diffusion, apply_original, diffusion_matrix, markov_matrix
from .rng import SplitMix64, derive_seed
from .spectrum import (
    SpectrumReport,
    classify_spectrum,
    composite_weight,
    eig_symmetric,
    spectrum_report,
    symmetrize,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityKernelSpec",
    "BLOWUP_LIMIT",
    "BlowUpError",
    "ConvergenceError",
    "DIRAC_DELTA",
    "DOT_PRODUCT",
    "DecayRateFit",
    "DegenerateRowError",
    "DivergenceError",
    "EMBEDDED",
    "EpochStats",
    "FLAG_TOL",
    "FeatureField",
    "GAUSSIAN",
    "Hyper",
    "InsufficientDataError",
    "KernelMatrix",
    "MarkovStepper",
    "MeanPreservationReport",
    "NetworkConfig",
    "NldError",
    "NonFiniteError",
    "OperatorMatrix",
    "OriginalStepper",
    "ProposedStepper",
    "RBF",
    "SpectrumReport",
    "SplitMix64",
    "StabilityVerdict",
    "StageConfig",
    "StageWeights",
    "SteadyStateReport",
    "StepStats",
    "SyntheticTask",
    "TrainingHistory",
    "TrajectoryRecord",
    "VarianceDecayReport",
    "agreement_count",
    "apply_diffusion",
    "apply_original",
    "backward",
    "build_kernel_matrix",
    "cfl_verdict",
    "checkpoint_bytes",
    "checkpoint_from_bytes",
    "classify_spectrum",
    "composite_weight",
    "derive_seed",
    "diffusion_matrix",
    "eig_symmetric",
    "estimate_decay_rate",
    "eval_affinity",
    "evolve",
    "extract_stage_spectra",
    "forward",
    "frobenius_norm",
    "generate_task",
    "init_params",
    "label_from_field",
    "load_matrix_csv",
    "loss_for_sample",
    "markov_matrix",
    "median_bandwidth",
    "normalize_rows",
    "param_names",
    "poincare_constant",
    "reverse_evolve",
    "save_matrix_csv",
    "sinkhorn_normalize",
    "spectrum_report",
    "steady_state_check_original",
    "step_original",
    "step_proposed",
    "symmetric_stochastic_kernel",
    "symmetrize",
    "train",
    "variance_dissipation",
    "verify_mean_preservation",
    "verify_variance_decay",
]
