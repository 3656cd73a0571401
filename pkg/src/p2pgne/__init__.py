"""Peer-to-peer prosumer energy-trading games.

Distributed online tracking of the variational equilibrium over a
communication graph, a centralized oracle for ground truth, and regret /
inequality diagnostics.
"""

from .errors import P2PGNEError
from .game import Game
from .graph import (
    LaplacianSpectrum,
    TradingGraph,
    build_graph,
    epsilon_factor,
    laplacian_spectrum,
)
from .model import (
    Decision,
    DecisionLayout,
    MarketSchedule,
    ProsumerParams,
    StackedDecision,
    affine_map,
    cost_components,
    monotonicity_constants,
    partial_gradient,
    pseudo_gradient,
)
from .constraints import (
    ConstraintBlocks,
    LocalFeasibleSet,
    balance_residual,
    build_blocks,
    coupling_residual,
    local_feasible_set,
    project_chi,
    soc_step,
)
from .solver import (
    FrozenResult,
    ProsumerState,
    RoundMessage,
    StepSchedule,
    Trajectory,
    run_horizon,
    step_dual_lambda,
    step_dual_mu,
    step_estimate,
    step_primal,
)
from .oracle import (
    OracleSequence,
    VgneSolution,
    brute_force_vgne,
    solve_vgne,
    vgne_sequence,
)
from .metrics import (
    EnvelopeMargins,
    KappaBounds,
    RegretReport,
    TrackingConstants,
    envelope_margins,
    kappa_bounds,
    regret,
    sublinearity_fit,
    tracking_constants,
)
from .scenario import (
    Scenario,
    load_scenario,
    random_scenario,
    reference_scenario,
    save_scenario,
    synth_profiles,
)

__version__ = "0.1.0"
