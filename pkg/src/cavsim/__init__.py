"""Stochastic quantum-trajectory simulator for a two-cavity
entanglement-by-detection protocol.

Two three-level ions sit in separate leaky cavities; a weak Raman drive
makes each emit at most one photon, the cavity outputs interfere on a
beam splitter, and a single detector click heralds a Bell state of the
ions.  The package provides the tensor-basis and operator plumbing, the
model builders (full, adiabatically eliminated, and shared-cavity
variants), a jump-unraveled trajectory integrator with waiting-time
click sampling, protocol drivers with ensemble statistics, closed-form
predictions with a master-equation oracle, and a reproducible CLI.
"""

from ._version import __version__
from .errors import (
    BasisError,
    CavsimError,
    ConfigError,
    DimensionError,
    NormalizationError,
    RegimeError,
    RegimeWarning,
)
from .hilbert import (
    BasisState,
    SparseOperator,
    TensorBasis,
    annihilation,
    fidelity,
    ion_projector,
    ion_transition,
    normalize,
    number_operator,
    reduce_to_ions,
)
from .model import (
    BuiltModel,
    ChannelKind,
    JumpChannel,
    ModelVariant,
    PhysicalParams,
    build_adiabatic_model,
    build_effective_hamiltonian,
    build_hamiltonian,
    build_jump_channels,
    build_model,
    channel_rate_operator,
)
from .trajectory import (
    IntegratorConfig,
    StepPropagator,
    Termination,
    TrajectoryMode,
    TrajectoryRecord,
    evolve_no_jump,
    run_trajectory,
    sample_jump,
    trajectory_rngs,
)
from .protocol import (
    EnsembleStats,
    Outcome,
    OutcomeKind,
    ProtocolKind,
    ProtocolKit,
    baseline_initial_state,
    run_baseline_sudden,
    run_ensemble,
    run_protocol,
    run_unconditional_ensemble,
    sweep_parameter,
    target_state,
)
from .analytics import (
    ClickCurve,
    ClosedFormReport,
    LiouvilleSolution,
    closed_form,
    liouville_solve,
    trace_distance,
    unconditional_click_statistics,
)

__all__ = [
    "__version__",
    "CavsimError",
    "BasisError",
    "DimensionError",
    "NormalizationError",
    "RegimeError",
    "ConfigError",
    "RegimeWarning",
    "BasisState",
    "TensorBasis",
    "SparseOperator",
    "annihilation",
    "number_operator",
    "ion_transition",
    "ion_projector",
    "normalize",
    "reduce_to_ions",
    "fidelity",
    "PhysicalParams",
    "ModelVariant",
    "ChannelKind",
    "JumpChannel",
    "BuiltModel",
    "build_hamiltonian",
    "build_effective_hamiltonian",
    "build_jump_channels",
    "build_adiabatic_model",
    "build_model",
    "channel_rate_operator",
    "IntegratorConfig",
    "StepPropagator",
    "TrajectoryMode",
    "Termination",
    "TrajectoryRecord",
    "evolve_no_jump",
    "sample_jump",
    "run_trajectory",
    "trajectory_rngs",
    "OutcomeKind",
    "ProtocolKind",
    "Outcome",
    "EnsembleStats",
    "ProtocolKit",
    "target_state",
    "baseline_initial_state",
    "run_protocol",
    "run_baseline_sudden",
    "run_ensemble",
    "run_unconditional_ensemble",
    "sweep_parameter",
    "ClosedFormReport",
    "closed_form",
    "LiouvilleSolution",
    "ClickCurve",
    "liouville_solve",
    "unconditional_click_statistics",
    "trace_distance",
]
