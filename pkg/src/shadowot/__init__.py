"""Discrete regularized optimal transport with certified stability bounds.

Measures live on finite metric spaces; couplings are dense tensors over
products of those spaces.  Hot loops (transport simplex, Sinkhorn, Lipschitz
constants) are compiled with numba unless ``SHADOWOT_DISABLE_NUMBA=1``.
"""

from .bounds import (
    BoundInputs,
    bounded_cost_stability_bound,
    bounded_transport_constant,
    cost_condition_constant,
    cost_stability_bounds,
    optimizer_stability_bound,
    sinkhorn_rate_constants,
    value_stability_bound,
)
from .certificates import Certificate, StabilityCertificate
from .divergences import (
    KL,
    QUADRATIC,
    DivergenceSpec,
    MarkovKernel,
    check_data_processing,
    custom_divergence,
    divergence,
    f_divergence,
    kl_divergence,
    make_kernel,
    push_kernel,
    transport_constant,
)
from .errors import (
    BadAxis,
    BadMass,
    BadOrder,
    ConfigInvalid,
    DegenerateData,
    EmptyGrid,
    IncompatibleSpaces,
    InvalidDivergence,
    LengthMismatch,
    MarginalMismatch,
    MissingFactors,
    NegativeWeight,
    NonpositiveAlpha,
    NotConverged,
    ShadowOTError,
    SolverFailure,
    SpaceMismatch,
    UnknownExperiment,
    ZeroMarginal,
)
from .exact import (
    bottleneck,
    coupling_distance,
    marginal_tuple_distance,
    solve_transport,
    total_variation,
    wasserstein,
)
from .experiments import EXPERIMENTS, ExperimentConfig, ExperimentReport, fit_rate_exponent, run_experiment
from .measures import (
    Coupling,
    DiscreteMeasure,
    MetricSpace,
    ProductSpace,
    dirac,
    make_coupling,
    make_discrete_measure,
    marginal,
    product_measure,
    uniform,
)
from .regularized import (
    CostSpec,
    SolveReport,
    entropic_functional,
    f_regularized_solve,
    make_cost,
    multimarginal_sinkhorn_solve,
    power_cost,
    pythagorean_certificate,
    regularized_functional,
    regularized_solve,
    sinkhorn_solve,
    sqeuclidean_cost,
)
from .shadow import ShadowResult, build_shadow, verify_shadow

__version__ = "0.1.0"

__all__ = [
    "BoundInputs",
    "bounded_cost_stability_bound",
    "bounded_transport_constant",
    "cost_condition_constant",
    "cost_stability_bounds",
    "optimizer_stability_bound",
    "sinkhorn_rate_constants",
    "value_stability_bound",
    "Certificate",
    "StabilityCertificate",
    "KL",
    "QUADRATIC",
    "DivergenceSpec",
    "MarkovKernel",
    "check_data_processing",
    "custom_divergence",
    "divergence",
    "f_divergence",
    "kl_divergence",
    "make_kernel",
    "push_kernel",
    "transport_constant",
    "bottleneck",
    "coupling_distance",
    "marginal_tuple_distance",
    "solve_transport",
    "total_variation",
    "wasserstein",
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentReport",
    "fit_rate_exponent",
    "run_experiment",
    "Coupling",
    "DiscreteMeasure",
    "MetricSpace",
    "ProductSpace",
    "dirac",
    "make_coupling",
    "make_discrete_measure",
    "marginal",
    "product_measure",
    "uniform",
    "CostSpec",
    "SolveReport",
    "entropic_functional",
    "f_regularized_solve",
    "make_cost",
    "multimarginal_sinkhorn_solve",
    "power_cost",
    "pythagorean_certificate",
    "regularized_functional",
    "regularized_solve",
    "sinkhorn_solve",
    "sqeuclidean_cost",
    "ShadowResult",
    "build_shadow",
    "verify_shadow",
    "BadAxis",
    "BadMass",
    "BadOrder",
    "ConfigInvalid",
    "DegenerateData",
    "EmptyGrid",
    "IncompatibleSpaces",
    "InvalidDivergence",
    "LengthMismatch",
    "MarginalMismatch",
    "MissingFactors",
    "NegativeWeight",
    "NonpositiveAlpha",
    "NotConverged",
    "ShadowOTError",
    "SolverFailure",
    "SpaceMismatch",
    "UnknownExperiment",
    "ZeroMarginal",
    "__version__",
]
