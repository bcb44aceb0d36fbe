"""regobs: regional boundary observability toolkit for coupled diffusion
systems -- sensor strategicness tests, detectability gain design, and exact
simulation of full-order and reduced-order exponential state estimators."""

from .config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    render_config,
)
from .geometry import Domain, Rect
from .harness import (
    RunReport,
    SweepResult,
    emit_outputs,
    emit_sweep,
    placement_sweep,
    run_experiment,
)
from .observer import (
    NotDetectableError,
    ObserverGain,
    Trajectory,
    UnstableSplit,
    design_gain,
    estimator_matrices,
    reduced_output_map,
    simulate_full_order,
    simulate_reduced_order,
    split_unstable_stable,
)
from .region import (
    BoundarySegment,
    CollarRegion,
    DecayFit,
    InternalRectangle,
    build_collar,
    fit_decay,
    gamma_error_norm,
    restrict_trace,
)
from .sensing import (
    ModeGroup,
    PointwiseSensor,
    PredicateInapplicableError,
    PredicateResult,
    StrategicReport,
    ZoneSensor,
    group_modes_by_eigenvalue,
    input_matrix,
    nonstrategic_pointwise_predicate,
    nonstrategic_zone_predicate,
    observability_gramian,
    output_matrix,
    strategic_rank_test,
)
from .spectral import (
    Coefficients,
    ModalModel,
    ModeIndex,
    ModeSet,
    Propagator,
    assemble_exchange_model,
    eigenfunction_eval,
    eigenvalue,
    eigenvalues,
    eval_matrix,
    propagate,
)

__version__ = "0.1.0"

__all__ = [
    "BoundarySegment",
    "Coefficients",
    "CollarRegion",
    "ConfigError",
    "DecayFit",
    "Domain",
    "ExperimentConfig",
    "InternalRectangle",
    "ModalModel",
    "ModeGroup",
    "ModeIndex",
    "ModeSet",
    "NotDetectableError",
    "ObserverGain",
    "PointwiseSensor",
    "PredicateInapplicableError",
    "PredicateResult",
    "Propagator",
    "Rect",
    "RunReport",
    "StrategicReport",
    "SweepResult",
    "Trajectory",
    "UnstableSplit",
    "ZoneSensor",
    "assemble_exchange_model",
    "build_collar",
    "design_gain",
    "eigenfunction_eval",
    "eigenvalue",
    "eigenvalues",
    "emit_outputs",
    "emit_sweep",
    "estimator_matrices",
    "eval_matrix",
    "fit_decay",
    "gamma_error_norm",
    "group_modes_by_eigenvalue",
    "input_matrix",
    "load_config",
    "nonstrategic_pointwise_predicate",
    "nonstrategic_zone_predicate",
    "observability_gramian",
    "output_matrix",
    "parse_config",
    "placement_sweep",
    "propagate",
    "reduced_output_map",
    "render_config",
    "restrict_trace",
    "run_experiment",
    "simulate_full_order",
    "simulate_reduced_order",
    "split_unstable_stable",
    "strategic_rank_test",
]
