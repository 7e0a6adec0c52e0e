"""Networked multi-agent interactive POMDPs with decentralized message passing."""

from .errors import (
    BeliefUpdateAborted,
    DegenerateAverage,
    DisconnectedGraph,
    GridTooCoarse,
    ImpossibleObservation,
    InvalidModel,
    IterationCapExceeded,
    KeyMismatch,
    LevelMismatch,
    MessageKindMismatch,
    MissingEntry,
    NetIpomdpError,
    ProjectionTooFar,
    RecursionDepthExceeded,
    SelfLoop,
    UnsupportedModel,
)
from .ipomdp import (
    AgentType,
    InteractiveStateSpace,
    ModelSet,
    NetFrame,
    build_interactive_space,
    build_model_set,
    er_reward,
    ipomdp_opt,
    ipomdp_value_backup,
    level0_frame,
    model_action_dist,
    se_ipomdp,
    tau_indicator,
)
from .net import (
    CommGraph,
    Message,
    MessageKind,
    combine_neighbors,
    er_net,
    h_eval,
    net_backup,
    net_opt,
    project_belief_message,
    se_net,
    se_net_action,
    se_net_belief,
    se_net_observation,
    validate_graph,
)
from .pomdp import PomdpFrame, StateSpace, obs_likelihood, pomdp_opt, pomdp_value_backup, se_pomdp
from .solver import (
    EnvState,
    Scenario,
    SimulationConfig,
    TabularEnvironment,
    env_step,
    fixed_point_iterate,
    run_decentralized_bp,
)
from .tabulation import BeliefGraph, ValueTable, belief_key, sup_norm, tabulate

__version__ = "0.1.0"
