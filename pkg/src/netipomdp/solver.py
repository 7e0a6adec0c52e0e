"""Round-synchronous decentralized runtime.

Each round, every agent observes, exchanges one message with each neighbour,
updates its interactive belief, backs up its value table and picks an action
to execute at the end of the round. Agent phases run concurrently; message
delivery is a barrier between rounds. Traces are line-delimited JSON with
reals printed to 12 fractional digits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import (
    BeliefUpdateAborted,
    ImpossibleObservation,
    InvalidModel,
    IterationCapExceeded,
    NetIpomdpError,
)
from .ipomdp import IPomdpProblem
from .net import (
    DEFAULT_PROJECTION_BOUND,
    CommGraph,
    Message,
    MessageKind,
    NetProblem,
    message_context,
    validate_graph,
)
from .pomdp import stochasticity_violations, validate_belief
from .tabulation import (
    IMPOSSIBLE_MASS,
    TIE_EPSILON,
    BeliefGraph,
    ValueTable,
    optimal_actions,
    sup_norm,
)

__all__ = [
    "AgentSpec",
    "EnvState",
    "NetAgent",
    "RunResult",
    "Scenario",
    "SimulationConfig",
    "TabularEnvironment",
    "ValueTable",
    "env_step",
    "fixed_point_iterate",
    "format_record",
    "run_decentralized_bp",
    "sup_norm",
]


@dataclass(frozen=True)
class SimulationConfig:
    discount: float = 0.9
    convergence_epsilon: float = 1e-6
    max_rounds: int = 500
    expansion_depth: int = 4
    nesting_bound: int = 2
    message_type: str = "action"
    rng_seed: int = 0
    projection_bound: float = DEFAULT_PROJECTION_BOUND
    sweeps_per_round: int = 1
    workers: int = 1

    def __post_init__(self):
        problems = []
        if not (isinstance(self.discount, (int, float)) and 0.0 < self.discount < 1.0):
            problems.append(f"discount {self.discount} outside (0, 1)")
        if not self.convergence_epsilon > 0:
            problems.append("convergence_epsilon must be positive")
        if int(self.max_rounds) < 1:
            problems.append("max_rounds must be at least 1")
        if int(self.expansion_depth) < 0:
            problems.append("expansion_depth must be non-negative")
        if int(self.nesting_bound) < 1:
            problems.append("nesting_bound must be at least 1")
        if self.message_type not in {k.value for k in MessageKind}:
            problems.append(f"unknown message type {self.message_type!r}")
        if self.projection_bound is not None and not self.projection_bound >= 0:
            problems.append("projection_bound must be non-negative")
        if int(self.sweeps_per_round) < 1:
            problems.append("sweeps_per_round must be at least 1")
        if int(self.workers) < 1:
            problems.append("workers must be at least 1")
        if int(self.rng_seed) < 0:
            problems.append("rng_seed must be non-negative")
        if problems:
            raise InvalidModel(problems)


# -- environment --------------------------------------------------------------


@dataclass(frozen=True)
class EnvState:
    state: object
    slot: int = 0


class TabularEnvironment:
    """Shared physical state driven by the joint action of all agents.

    ``transition[s, a_0, ..., a_{N-1}, s']``; per agent
    ``observations[i][s', a_0, ..., a_{N-1}, o_i]`` and
    ``rewards[i][s, a_0, ..., a_{N-1}]``.
    """

    def __init__(self, transition, observations, rewards, initial):
        self.transition = np.asarray(transition, dtype=np.float64)
        self.observations = [np.asarray(o, dtype=np.float64) for o in observations]
        self.rewards = [np.asarray(r, dtype=np.float64) for r in rewards]
        self.initial = np.asarray(initial, dtype=np.float64)
        self.n_agents = self.transition.ndim - 2
        problems = stochasticity_violations("environment transition", self.transition,
                                            ("s",) + tuple(f"a{i}" for i in range(self.n_agents)))
        for i, o in enumerate(self.observations):
            problems += stochasticity_violations(f"environment observation[{i}]", o,
                                                 ("s'",) + tuple(f"a{j}" for j in range(self.n_agents)))
        if len(self.observations) != self.n_agents or len(self.rewards) != self.n_agents:
            problems.append("one observation and reward tensor per agent is required")
        if problems:
            raise InvalidModel(problems)
        validate_belief(self.initial, self.transition.shape[0], "initial state distribution")

    def initial_state(self, rng):
        return int(rng.choice(len(self.initial), p=self.initial))

    def step(self, state, actions, rng):
        a = tuple(int(x) for x in actions)
        s2 = int(rng.choice(self.transition.shape[-1], p=self.transition[(state,) + a]))
        obs = [int(rng.choice(o.shape[-1], p=o[(s2,) + a])) for o in self.observations]
        rew = [float(r[(state,) + a]) for r in self.rewards]
        return s2, obs, rew


def env_step(s, joint_actions, env, rng):
    """Sample ``s' ~ T(s, a)`` and ``o_i ~ O_i(s', a)``; rewards are read from ``R_i(s, a)``."""
    state, obs, rew = env.step(s.state, joint_actions, rng)
    return EnvState(state, s.slot + 1), obs, rew


# -- scenario -----------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    """Frame, interactive space and initial belief of one agent.

    ``space.models`` follows the agent's neighbours in ascending id order.
    """

    frame: object
    space: object
    belief: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class Scenario:
    graph: CommGraph
    agents: tuple
    environment: object
    message_type: str = "action"

    def validate(self):
        validate_graph(self.graph)
        if len(self.agents) != self.graph.node_count:
            raise InvalidModel("one agent per graph node is required")
        problems = []
        for i, spec in enumerate(self.agents):
            nb = self.graph.neighbors(i)
            if len(spec.space.models) != len(nb) or spec.frame.n_neighbors != len(nb):
                problems.append(f"agent {i} has {len(nb)} neighbours but models {len(spec.space.models)}")
            try:
                validate_belief(spec.belief, spec.space.size, f"agent {i} belief")
            except InvalidModel as exc:
                problems += exc.violations
        if problems:
            raise InvalidModel(problems)
        return True


# -- agents -------------------------------------------------------------------


def _message_keys(space, kind):
    ranges = []
    for ms in space.models:
        if kind is MessageKind.ACTION:
            ranges.append(range(ms.n_actions))
        elif kind is MessageKind.OBSERVATION:
            ranges.append(range(ms.n_observations))
        else:
            ranges.append(range(len(ms)))
    return list(product(*ranges))


def _entropy(b):
    p = b[b > 0]
    return float(-(p * np.log(p)).sum())


@dataclass
class AgentStep:
    belief: np.ndarray
    node: int
    action: int
    delta: float
    new_keys: int
    distances: list


class NetAgent:
    """One agent's belief, tabulated value function and action choice.

    The value table covers the closure (to ``expansion_depth``) of the initial
    belief under every possible incoming message key. Points first met at run
    time are added without closure and start at value 0.
    """

    def __init__(self, agent_id, spec, cfg):
        self.id = agent_id
        self.spec = spec
        self.cfg = cfg
        self.kind = MessageKind(cfg.message_type)
        has_nb = len(spec.space.models) > 0
        self.problem = NetProblem(spec.frame, spec.space, self.kind if has_nb else None)
        self.graph = BeliefGraph(self.problem, depth=cfg.expansion_depth)
        b0 = validate_belief(spec.belief, spec.space.size)
        self.graph.grow([(b0, ctx) for ctx in _message_keys(spec.space, self.kind)])
        self.values = np.zeros(len(self.graph))
        self.belief = b0
        self.node = None
        self.action = self.initial_action()

    def initial_action(self):
        base = IPomdpProblem(self.spec.frame, self.spec.space)
        q = np.array([base.expected_reward(self.belief, a) for a in range(base.n_actions)])
        return optimal_actions(q, TIE_EPSILON)[0]

    def physical_marginal(self):
        return self.spec.space.physical_marginal(self.belief)

    def outgoing(self, slot, observation):
        if self.kind is MessageKind.ACTION:
            payload = self.action
        elif self.kind is MessageKind.OBSERVATION:
            payload = observation
        else:
            payload = tuple(self.physical_marginal())
        return Message(self.id, slot, self.kind, payload)

    def step(self, slot, observation, messages):
        """Belief update, value sweeps and action choice; returns an :class:`AgentStep` without mutating."""
        if messages:
            ctx, dists = message_context(messages, self.spec.space, self.kind, self.cfg.projection_bound)
        else:
            ctx, dists = (), []
        masses = self.problem.successors(self.belief, self.action, ctx)
        row = masses[observation]
        total = row.sum()
        if total < IMPOSSIBLE_MASS:
            raise ImpossibleObservation(f"observation {observation} has zero likelihood")
        b = row / total
        before = len(self.graph)
        node, _ = self.graph.add_online(b, ctx)
        new_keys = len(self.graph) - before
        values = np.concatenate([self.values, np.zeros(new_keys)])
        delta = 0.0
        q = None
        for _ in range(self.cfg.sweeps_per_round):
            new, q = self.graph.sweep(values)
            delta = float(np.max(np.abs(new - values), initial=0.0))
            values = new
        action = optimal_actions(q[node], TIE_EPSILON)[0]
        return AgentStep(b, node, action, delta, new_keys, [d for d in dists if d is not None]), values

    def commit(self, result, values):
        self.belief = result.belief
        self.node = result.node
        self.action = result.action
        self.values = values

    def table(self):
        return self.graph.table(self.values)

    def current_value(self):
        return float(self.values[self.node]) if self.node is not None else 0.0


@dataclass
class RunResult:
    converged: bool
    rounds: int
    final_max_delta: float
    tables: list
    trace: list = field(default_factory=list)
    values: list = field(default_factory=list)
    error: BaseException = None


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return "true" if x is True else "false" if x is False else "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            return '"' + repr(float(x)) + '"'
        return f"{float(x):.12f}"
    if isinstance(x, str):
        return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    return "[" + ", ".join(_fmt(v) for v in x) + "]"


def format_record(rec):
    """One trace line; reals carry 12 fractional digits."""
    return _fmt(rec)


def run_decentralized_bp(cfg, scenario, on_record=None):
    """Run the synchronous message-passing loop until every agent's value delta is below epsilon.

    Returns a :class:`RunResult`. ``converged`` is false when ``max_rounds`` is
    reached. A failed belief update raises :class:`BeliefUpdateAborted`; the
    partial trace is attached to the exception as ``result``.
    """
    scenario.validate()
    if scenario.message_type != cfg.message_type:
        scenario = Scenario(scenario.graph, scenario.agents, scenario.environment, cfg.message_type)
    graph = scenario.graph
    n = graph.node_count
    neighbors = [graph.neighbors(i) for i in range(n)]
    agents = [NetAgent(i, spec, cfg) for i, spec in enumerate(scenario.agents)]
    rng = np.random.Generator(np.random.PCG64(int(cfg.rng_seed)))
    env = scenario.environment
    s = EnvState(env.initial_state(rng), 0)
    trace = []

    def emit(rec):
        trace.append(rec)
        if on_record is not None:
            on_record(rec)

    converged = False
    max_delta = math.inf
    rounds = 0
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for slot in range(1, cfg.max_rounds + 1):
            rounds = slot
            s, obs, rew = env_step(s, [a.action for a in agents], env, rng)
            outbox = [agents[i].outgoing(slot, obs[i]) for i in range(n)]
            for m in outbox:
                if neighbors[m.sender]:
                    emit({"record": "message", "slot": m.slot, "sender": m.sender,
                          "kind": m.kind.value, "payload": m.payload})
            inbox = [tuple(outbox[j] for j in neighbors[i]) for i in range(n)]

            def work(i):
                try:
                    return agents[i].step(slot, obs[i], inbox[i])
                except NetIpomdpError as exc:
                    return exc

            results = list(pool.map(work, range(n))) if pool else [work(i) for i in range(n)]
            for i, res in enumerate(results):
                if isinstance(res, Exception):
                    err = BeliefUpdateAborted(slot, i, res)
                    err.result = RunResult(False, slot, max_delta, [a.table() for a in agents], trace,
                                           [a.current_value() for a in agents], err)
                    raise err
            new_keys = 0
            max_delta = 0.0
            for i, (step, values) in enumerate(results):
                agents[i].commit(step, values)
                new_keys += step.new_keys
                max_delta = max(max_delta, step.delta)
                emit({
                    "record": "round",
                    "slot": slot,
                    "agent": i,
                    "action": step.action,
                    "observation": obs[i],
                    "reward": rew[i],
                    "value_delta": step.delta,
                    "belief_entropy": _entropy(step.belief),
                    "projection_distance": step.distances or None,
                    "new_keys": step.new_keys,
                })
            if new_keys == 0 and max_delta < cfg.convergence_epsilon:
                converged = True
                break
    finally:
        if pool:
            pool.shutdown()
    values = [a.current_value() for a in agents]
    emit({"record": "summary", "converged": converged, "rounds": rounds,
          "final_max_delta": max_delta, "values": values})
    return RunResult(converged, rounds, max_delta, [a.table() for a in agents], trace, values)


def fixed_point_iterate(U0, domain, epsilon=1e-6, max_iter=100000):
    """Iterate the backup on a tabulated ``domain`` (a :class:`BeliefGraph`) from ``U0``.

    Stops once the sup-norm delta drops below ``epsilon``. Returns
    ``(table, iterations, deltas)``.
    """
    if list(U0.keys) != list(domain.keys):
        raise InvalidModel("initial table must be keyed on the domain")
    values = np.array(U0.values)
    deltas = []
    for it in range(1, max_iter + 1):
        new, _ = domain.sweep(values)
        delta = float(np.max(np.abs(new - values), initial=0.0))
        deltas.append(delta)
        values = new
        if delta < epsilon:
            return domain.table(values), it, deltas
    raise IterationCapExceeded(f"no convergence to {epsilon} within {max_iter} backups")
