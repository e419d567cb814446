"""Robust H-infinity analysis and controller tuning for uncertain
linear time-delay systems and delay-coupled networks.

The public surface re-exports the main types and operations of each
submodule; see the module docstrings for the underlying contracts.
"""

__version__ = "0.1.0"

from .errors import (
    AssumptionError,
    ConvergenceError,
    DegenerateRootError,
    DelayHinfError,
    InstabilityError,
    NonsmoothError,
    NormalizationError,
    NoStabilizerError,
    ParseError,
    SingularMatrixError,
    UnboundedRadiusError,
    ValidationError,
)
from .sysmodel import (
    ComplexPerturbation,
    SpectralPoint,
    UncertainDelaySystem,
    characteristic_matrix,
    load_system,
    save_system,
    sigma_max,
    transfer_eval,
)
from .roots import RootRequest, eig_triple, rightmost_roots, spectral_abscissa
from .svset import (
    AbscissaResult,
    FlowConfig,
    StartRecord,
    alpha_eps_derivative,
    pseudo_spectral_abscissa,
)
from .hinf import (
    NormResult,
    RadiusResult,
    grid_oracle,
    hinf_norm_fixed,
    robust_hinf_norm,
    robust_stability_radius,
    worst_case_gain_curve,
)
from .network import (
    ControllerParams,
    NetworkedPlant,
    Topology,
    adjacency_line,
    adjacency_ring,
    build_cart_pendulum,
    build_closed_loop_full,
    build_decoupled_subsystem,
    check_assumption,
    controller_from_dict,
    controller_to_dict,
    decoupled_norm_exact,
    plant_from_dict,
    plant_to_dict,
    topology_from_dict,
    topology_to_dict,
)
from .synth import SynthConfig, SynthesisResult, stabilize, synthesize
from .sim import NoiseSpec, SimTrace, make_noise, rms, simulate

__all__ = [
    "AbscissaResult",
    "AssumptionError",
    "ComplexPerturbation",
    "ControllerParams",
    "ConvergenceError",
    "DegenerateRootError",
    "DelayHinfError",
    "FlowConfig",
    "InstabilityError",
    "NetworkedPlant",
    "NonsmoothError",
    "NoiseSpec",
    "NormResult",
    "NormalizationError",
    "NoStabilizerError",
    "ParseError",
    "RadiusResult",
    "RootRequest",
    "SimTrace",
    "SingularMatrixError",
    "SpectralPoint",
    "StartRecord",
    "SynthConfig",
    "SynthesisResult",
    "Topology",
    "UnboundedRadiusError",
    "UncertainDelaySystem",
    "ValidationError",
    "adjacency_line",
    "adjacency_ring",
    "alpha_eps_derivative",
    "build_cart_pendulum",
    "build_closed_loop_full",
    "build_decoupled_subsystem",
    "characteristic_matrix",
    "check_assumption",
    "controller_from_dict",
    "controller_to_dict",
    "decoupled_norm_exact",
    "eig_triple",
    "grid_oracle",
    "hinf_norm_fixed",
    "load_system",
    "make_noise",
    "plant_from_dict",
    "plant_to_dict",
    "pseudo_spectral_abscissa",
    "rightmost_roots",
    "rms",
    "robust_hinf_norm",
    "robust_stability_radius",
    "save_system",
    "simulate",
    "sigma_max",
    "spectral_abscissa",
    "stabilize",
    "synthesize",
    "topology_from_dict",
    "topology_to_dict",
    "transfer_eval",
    "worst_case_gain_curve",
    "__version__",
]
