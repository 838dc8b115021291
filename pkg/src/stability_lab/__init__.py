"""Exact finite-probability laboratory for stability and privacy notions.

Builds finite worlds (domain, prior over sample tuples, mechanism
kernel), derives every induced distribution exactly, certifies the
stability notions on them, verifies parameter-transfer and separation
statements on concrete instances, and runs the monitor generalization
experiments with seeded Monte Carlo.
"""

from .adaptivity import (
    AdaptiveRun,
    Analyst,
    advanced_composition_bound,
    linear_composition_bound,
    reachable_posteriors,
    run_adaptive,
    verify_advanced_composition,
    verify_linear_composition,
    view_loss_decomposition_check,
)
from .dists import (
    FiniteDist,
    JointDist,
    indistinguishability_delta,
    maximal_leakage,
    min_delta_for_eps,
    pushforward,
    statistical_distance,
)
from .errors import (
    BudgetExceededError,
    ConfigurationError,
    DomainMismatchError,
    InvalidDistributionError,
    PreconditionError,
    StabilityLabError,
    UnsupportedWorldError,
)
from .generalization import (
    AccuracyReport,
    Estimate,
    ReconstructThenOverfitAnalyst,
    SamplingAnalyst,
    accuracy_certify,
    accuracy_estimate,
    expectation_generalization_check,
    loss_assessment_query,
    monitor_run,
    overfit_lower_bound_check,
    second_monitor_run,
)
from .mechanisms import (
    CompressionSpec,
    EmpiricalMeanMechanism,
    NoiseChannelMechanism,
    NoiseSpec,
    QueryMechanism,
    build_compression_mechanism,
    build_constant_mechanism,
    build_element_release,
    build_empirical_mean_kernel,
    build_noise_mechanism,
    build_parity_mechanism,
    build_randomized_response,
    compose_with_channel,
    uniform_position_selector,
)
from .notions import (
    IMPLICATIONS,
    ImplicationReport,
    NotionCertificate,
    SeparationReport,
    dp_certify,
    element_family,
    lmi_certify,
    lml_certify,
    mi_certify,
    min_eps_at_delta,
    ml_certify,
    run_separation,
    ts_certify,
    verify_implication,
)
from .queries import LinearQuery, query_values
from .stability import (
    LSSCertificate,
    LossProfile,
    delta_star_curve,
    expected_loss,
    loss_profile,
    lss_certify,
    set_loss,
    unstable_mass_bound_check,
)
from .worlds import (
    DEFAULT_TUPLE_BUDGET,
    Domain,
    InducedDistributions,
    MechanismKernel,
    SamplePrior,
    World,
    all_tuples,
    bayes_check,
    build_world,
    element_release_analytic,
    explicit_prior,
    induce,
    product_prior,
    world_from_json,
    world_to_json,
)

__all__ = [name for name in dir() if not name.startswith("_")]
