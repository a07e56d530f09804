# mpbridge - Matrix-product measures as Markov bridges, with their large deviations
__version__ = "0.1.0"

from mpbridge.empirical import (
    GeneralizedSpatialMeasure,
    KWordMeasure,
    SpatialMeasure,
    check_stationary,
    coarsen,
    empirical_k,
    generalized_spatial,
    marginal_lower,
    spatial_empirical,
)
from mpbridge.exceptions import (
    BoundaryOptimum,
    BoundViolation,
    DegenerateLaw,
    EmptyEvent,
    InconsistentEigendata,
    Infeasible,
    InvalidWord,
    MpbridgeError,
    NoConvergence,
    NotPrimitive,
    NotStationaryInput,
    NumericalError,
    NumericUnderflow,
    PhaseAmbiguous,
    RegionViolation,
    SizeLimit,
    SupportViolation,
    TruncationFailure,
    ValidationError,
)
from mpbridge.perron import (
    PerronData,
    Primitivity,
    StochasticMatrix,
    TridiagonalSpec,
    check_primitive,
    doob_transform,
    log_return_weight_even,
    perron_finite,
    perron_left,
    perron_tridiagonal_infinite,
    return_weight_even,
    stationary_distribution,
)
from mpbridge.rate_finite import (
    RateOptions,
    RateReport,
    pair_rate_dual,
    pair_rate_primal,
    rate_parallel_case,
    rate_stochastic_case,
    spatial_rate,
    tilted_perron,
    typical_pair_measure,
)
from mpbridge.rate_tasep import (
    GPath,
    MacroTriple,
    Profile,
    ProfileOptions,
    brute_force_profile,
    calibrate_constant,
    profile_objective,
    rate_frakS,
    rate_pair_contracted,
    rate_profile,
    rate_S_bridge,
    rate_star,
    rate_z_rho,
    step_entropy,
    typical_triple,
)
from mpbridge.rational import (
    BridgeLaw,
    EnlargedChain,
    RationalModel,
    Word,
    assemble_enlarged,
    bridge_endpoint_law,
    bridge_kernel,
    bridge_probability,
    build_enlarged,
    coupling_weight,
    log_measure_weight,
    log_partition_function,
    markov_path_probability,
    measure_probability,
    measure_weight,
    parallel_model,
    partition_function,
    sample_bridge,
    sample_bridges,
    theta_invariant,
)
from mpbridge.tasep import (
    MU_B,
    MU_I,
    StepLaw,
    TasepParams,
    TripleEmpirical,
    TruncatedTasepModel,
    build_tasep,
    effective_log_rn,
    effective_S_entry,
    fluid_limit_ode,
    frak_S_entry,
    generator_stationary,
    ld_constants,
    nu_hat_00,
    reweighting_weights,
    rho_bar,
    sample_effective,
    sample_tasep_bridge,
    sample_tilted,
    tasep_probability,
    triple_empirical,
)
from mpbridge.verify import (
    LDEstimate,
    ProfileBall,
    WordBall,
    enumerate_exact,
    ld_curve,
    sandwich_check,
    sandwich_constants,
    wilson_interval,
)

__all__ = [
    # Core
    "__version__",
    # Perron-Frobenius
    "PerronData",
    "Primitivity",
    "StochasticMatrix",
    "TridiagonalSpec",
    "check_primitive",
    "perron_finite",
    "perron_left",
    "doob_transform",
    "stationary_distribution",
    "perron_tridiagonal_infinite",
    "return_weight_even",
    "log_return_weight_even",
    # Rational models and bridges
    "RationalModel",
    "Word",
    "BridgeLaw",
    "EnlargedChain",
    "measure_weight",
    "log_measure_weight",
    "partition_function",
    "log_partition_function",
    "measure_probability",
    "coupling_weight",
    "assemble_enlarged",
    "build_enlarged",
    "theta_invariant",
    "bridge_probability",
    "bridge_endpoint_law",
    "bridge_kernel",
    "sample_bridge",
    "sample_bridges",
    "markov_path_probability",
    "parallel_model",
    # Empirical measures
    "KWordMeasure",
    "SpatialMeasure",
    "GeneralizedSpatialMeasure",
    "empirical_k",
    "spatial_empirical",
    "generalized_spatial",
    "check_stationary",
    "marginal_lower",
    "coarsen",
    # Finite rate functionals
    "RateOptions",
    "RateReport",
    "pair_rate_primal",
    "pair_rate_dual",
    "tilted_perron",
    "typical_pair_measure",
    "rate_parallel_case",
    "rate_stochastic_case",
    "spatial_rate",
    # TASEP
    "TasepParams",
    "TruncatedTasepModel",
    "StepLaw",
    "MU_I",
    "MU_B",
    "TripleEmpirical",
    "build_tasep",
    "tasep_probability",
    "frak_S_entry",
    "effective_S_entry",
    "sample_effective",
    "sample_tilted",
    "sample_tasep_bridge",
    "effective_log_rn",
    "reweighting_weights",
    "triple_empirical",
    "nu_hat_00",
    "generator_stationary",
    "rho_bar",
    "ld_constants",
    "fluid_limit_ode",
    # TASEP rate functionals
    "Profile",
    "MacroTriple",
    "GPath",
    "ProfileOptions",
    "step_entropy",
    "rate_star",
    "rate_S_bridge",
    "rate_frakS",
    "rate_pair_contracted",
    "rate_z_rho",
    "profile_objective",
    "rate_profile",
    "typical_triple",
    "calibrate_constant",
    "brute_force_profile",
    # Verification
    "LDEstimate",
    "WordBall",
    "ProfileBall",
    "enumerate_exact",
    "ld_curve",
    "sandwich_check",
    "sandwich_constants",
    "wilson_interval",
    # Exceptions
    "MpbridgeError",
    "ValidationError",
    "InvalidWord",
    "RegionViolation",
    "SupportViolation",
    "NotStationaryInput",
    "SizeLimit",
    "NumericalError",
    "NotPrimitive",
    "NoConvergence",
    "InconsistentEigendata",
    "DegenerateLaw",
    "TruncationFailure",
    "Infeasible",
    "NumericUnderflow",
    "BoundViolation",
    "EmptyEvent",
    "PhaseAmbiguous",
    "BoundaryOptimum",
]
