"""Rank damping-actuator locations in multi-machine power systems.

The library builds classical swing-equation models from case files,
computes the total action (time integral) of kinetic oscillation energy
after a disturbance, differentiates it analytically with respect to an
actuator feedback gain, and validates rankings with nonlinear
time-domain simulation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AffinityError,
    CaseError,
    CaseParseError,
    CaseSemanticError,
    DegenerateDisturbance,
    DegenerateSpectrum,
    DisconnectedBus,
    ImaginaryResidueExceeded,
    NonConvergence,
    NotAsymptoticallyStable,
    OscActionError,
    ResonantPair,
    SimulationDiverged,
    SingularElimination,
    UnknownBusError,
    ZeroModeCarriesEnergy,
)
from .netmodel import (  # noqa: F401
    Branch,
    Bus,
    EquilibriumModel,
    Generator,
    PowerFlowSolution,
    SystemCase,
    build_ybus,
    bundled_case_path,
    case_from_dict,
    init_classical,
    kron_reduce,
    load_case,
    nearest_generator,
    solve_power_flow,
)
from .dynsim import (  # noqa: F401
    Actuator,
    GainSweep,
    LinearModel,
    Trajectory,
    apply_fault,
    build_linear_model,
    gain_sweep,
    rhs,
    simulate,
)
from .modal import (  # noqa: F401
    ModalBasis,
    ModalSensitivity,
    eig_decompose,
    eigenvalue_sensitivities,
    eigenvector_derivatives,
)
from .tas import (  # noqa: F401
    FaultSpec,
    ModalEnergy,
    RankingReport,
    RankingRow,
    SensitivityBreakdown,
    action,
    kinetic_energy,
    modal_energy,
    rank_actuators,
    resolve_disturbance,
    total_action,
    total_action_lyapunov,
    total_action_sensitivity,
)
