"""Design and verification toolkit for discrete-time linear multi-agent
consensus: observer-type protocol gain synthesis, consensus-region
analysis, stability verdicts over directed topologies, and closed-loop
network/formation simulation.
"""

from .errors import (
    DeltaOutOfRangeError,
    DimensionMismatchError,
    DivergedError,
    DomainError,
    FileFormatError,
    GainDesignError,
    IllConditionedBasisError,
    IndexOutOfRangeError,
    InfeasibleFormationError,
    MaxIterationsError,
    NegativeWeightError,
    NoSpanningTreeError,
    NotDetectableError,
    NotNeutrallyStableError,
    NotStabilizableError,
    RowSumError,
    SelfLoopError,
    SingularProjectionError,
    SpectrumError,
    ToolkitError,
    TopologyError,
    UserGainUnstableError,
    ZeroDiagonalError,
)
from .gain_design import (
    JordanSplit,
    MareSolution,
    ProtocolGains,
    algorithm1,
    algorithm2,
    design_k,
    gains_from_json,
    gains_to_json,
    jordan_split,
    solve_mare,
    user_gains,
)
from .network_sim import (
    ClosedLoopSystem,
    TrajectoryLog,
    closed_loop,
    initial_states,
    predict_final_value,
    simulate,
    simulate_formation,
    simulate_static,
)
from .region import (
    ConsensusRegion,
    contains,
    disk_radius_certified,
    scan_region,
)
from .stability import (
    AgentModel,
    ConsensusVerdict,
    SpectralClass,
    check_theorem1,
    classify,
    is_detectable,
    is_schur,
    is_stabilizable,
    model_from_json,
    model_to_json,
    protocol_matrix_stable,
    spectral_radius,
)
from .topology import (
    Formation,
    Topology,
    TopologySpectrum,
    analyze_spectrum,
    build_from_edges,
    in_gamma_delta,
    non_one_eigenvalues,
    topology_from_json,
    topology_to_json,
    validate_topology,
)

__version__ = "0.1.0"
