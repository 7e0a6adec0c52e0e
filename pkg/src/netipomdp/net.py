"""Networked multi-agent interactive POMDPs.

Agents sit on a connected communication graph and, each slot, receive one
message from every neighbour. The scenario fixes a single message kind:

* ``action``: the neighbour's last executed action,
* ``belief``: the neighbour's belief over physical states (projected onto the
  nearest candidate model),
* ``observation``: the neighbour's current observation.

Value tables are keyed on ``(belief key, message key)`` where the message key
is the tuple of per-neighbour payload indices (projected model index for
beliefs).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DisconnectedGraph,
    ImpossibleObservation,
    InvalidModel,
    MessageKindMismatch,
    ProjectionTooFar,
    SelfLoop,
)
from .ipomdp import (
    AgentType,
    IPomdpProblem,
    NetFrame,
    expected_reward,
    interactive_masses,
    joint_factor,
    marginal_factor,
    neighbor_obs_table,
)
from .pomdp import validate_belief
from .tabulation import (
    IMPOSSIBLE_MASS,
    TIE_EPSILON,
    ValueTable,
    action_values,
    backed_up_value,
    belief_key,
    optimal_actions,
)

DEFAULT_PROJECTION_BOUND = 0.25
WIRE_DIGITS = 12

__all__ = [
    "CommGraph",
    "Message",
    "MessageKind",
    "NetFrame",
    "NetProblem",
    "combine_neighbors",
    "er_net",
    "h_eval",
    "net_backup",
    "net_opt",
    "project_belief_message",
    "se_net",
    "se_net_action",
    "se_net_belief",
    "se_net_observation",
    "validate_graph",
]


# -- communication graph ----------------------------------------------------


@dataclass(frozen=True)
class CommGraph:
    node_count: int
    edges: tuple

    def __post_init__(self):
        edges = tuple(sorted(tuple(sorted((int(i), int(j)))) for i, j in self.edges))
        object.__setattr__(self, "edges", tuple(dict.fromkeys(edges)))

    def neighbors(self, i):
        out = [j for a, b in self.edges for j in ((b,) if a == i else (a,) if b == i else ())]
        return tuple(sorted(set(out)))


def validate_graph(g):
    """Raise unless ``g`` is loop-free and connected."""
    if g.node_count < 1:
        raise InvalidModel("graph needs at least one node")
    for i, j in g.edges:
        if i == j:
            raise SelfLoop(f"self-loop on node {i}")
        if not (0 <= i < g.node_count and 0 <= j < g.node_count):
            raise InvalidModel(f"edge ({i}, {j}) references a missing node")
    adj = {i: [] for i in range(g.node_count)}
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        for j in adj[queue.popleft()]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    if len(seen) != g.node_count:
        missing = sorted(set(range(g.node_count)) - seen)
        raise DisconnectedGraph(f"nodes {missing} are unreachable from node 0")
    return True


# -- messages ---------------------------------------------------------------


class MessageKind(str, Enum):
    ACTION = "action"
    BELIEF = "belief"
    OBSERVATION = "observation"


@dataclass(frozen=True)
class Message:
    """One message; ``payload`` is an index for action/observation, a probability tuple for beliefs."""

    sender: int
    slot: int
    kind: MessageKind
    payload: object

    def __post_init__(self):
        kind = MessageKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is MessageKind.BELIEF:
            object.__setattr__(self, "payload", tuple(float(x) for x in self.payload))
        else:
            object.__setattr__(self, "payload", int(self.payload))

    def to_wire(self):
        """One line: ``{"slot", "sender", "kind", "payload"}``; belief entries carry 12 fractional digits."""
        if self.kind is MessageKind.BELIEF:
            payload = "[" + ", ".join(f"{x:.{WIRE_DIGITS}f}" for x in self.payload) + "]"
        else:
            payload = str(self.payload)
        return (
            f'{{"slot": {self.slot}, "sender": {self.sender}, '
            f'"kind": "{self.kind.value}", "payload": {payload}}}'
        )

    @classmethod
    def from_wire(cls, line):
        rec = json.loads(line)
        return cls(rec["sender"], rec["slot"], rec["kind"], rec["payload"])


@dataclass(frozen=True)
class Projection:
    model: AgentType
    index: int
    distance: float


def project_belief_message(raw, candidates, bound=DEFAULT_PROJECTION_BOUND):
    """Nearest candidate model to ``raw`` in total variation over physical states.

    Ties go to the lowest index. Raises :class:`ProjectionTooFar` when the
    distance exceeds ``bound`` (``None`` disables the bound).
    """
    phys = candidates.beliefs_physical()
    raw = validate_belief(raw, phys.shape[1], "belief message")
    dist = 0.5 * np.abs(phys - raw[None, :]).sum(axis=1)
    k = int(np.argmin(dist))
    if bound is not None and dist[k] > bound:
        raise ProjectionTooFar(float(dist[k]), bound)
    return Projection(candidates.models[k], k, float(dist[k]))


def _as_messages(messages):
    if isinstance(messages, Message):
        return (messages,)
    return tuple(messages)


def message_context(messages, space, kind, bound=DEFAULT_PROJECTION_BOUND):
    """Per-neighbour payload indices and projection distances for ``messages``.

    ``messages`` align with ``space.models`` (neighbours in ascending id order).
    """
    messages = _as_messages(messages)
    if len(messages) != len(space.models):
        raise InvalidModel(f"expected {len(space.models)} messages, got {len(messages)}")
    kind = MessageKind(kind)
    ctx, dists = [], []
    for msg, ms in zip(messages, space.models):
        if msg.kind is not kind:
            raise MessageKindMismatch(f"expected {kind.value} message, got {msg.kind.value}")
        if kind is MessageKind.BELIEF:
            proj = project_belief_message(msg.payload, ms, bound)
            ctx.append(proj.index)
            dists.append(proj.distance)
            continue
        limit = ms.n_actions if kind is MessageKind.ACTION else ms.n_observations
        if not 0 <= msg.payload < limit:
            raise InvalidModel(f"{kind.value} payload {msg.payload} outside the sender's space")
        ctx.append(msg.payload)
        dists.append(None)
    return tuple(ctx), dists


# -- per-neighbour factors for each message kind ----------------------------


def action_factor(ms, observer_space, a_i, a_j):
    """The messaged action replaces the model's action distribution."""

    def build():
        _, G = marginal_factor(ms, observer_space, a_i)
        W = np.zeros((len(ms), ms.n_actions))
        W[:, a_j] = 1.0
        W.flags.writeable = False
        return W, G, W

    return ms.cached(("action", observer_space, a_i, a_j), build)


def observation_factor(ms, observer_space, a_i, o_j):
    """Only the messaged observation's term of the neighbour sum survives."""

    def build():
        oj = neighbor_obs_table(ms, observer_space, a_i)
        K, S, A, _ = oj.shape
        G = np.zeros((K, A, S, K))
        for k in range(K):
            for a in range(A):
                k2 = ms.successor[k, a, o_j]
                if k2 >= 0:
                    G[k, a, :, k2] = oj[k, :, a, o_j]
        G.flags.writeable = False
        return ms.action_dist, G, ms.action_dist

    return ms.cached(("observation", observer_space, a_i, o_j), build)


def belief_factor(ms, observer_space, a_i, k_msg):
    """Successor model pinned to the projected message; no neighbour-observation term."""

    def build():
        K, A, S = len(ms), ms.n_actions, observer_space.size
        G = np.zeros((K, A, S, K))
        same = ms.group == ms.group[k_msg]
        G[same, :, :, k_msg] = 1.0
        Wr = np.repeat(ms.action_dist[k_msg][None, :], K, axis=0)
        G.flags.writeable = False
        Wr.flags.writeable = False
        return ms.action_dist, G, Wr

    return ms.cached(("belief", observer_space, a_i, k_msg), build)


_FACTORS = {
    MessageKind.ACTION: action_factor,
    MessageKind.OBSERVATION: observation_factor,
    MessageKind.BELIEF: belief_factor,
}


def _joint_weights(weights):
    W = weights[0]
    for Wn in weights[1:]:
        K1, A1 = W.shape
        K2, A2 = Wn.shape
        W = (W[:, None, :, None] * Wn[None, :, None, :]).reshape(K1 * K2, A1 * A2)
    return W


class NetProblem(IPomdpProblem):
    """Belief problem of a networked agent; ``ctx`` is the incoming message key.

    The observation likelihood used for value backups is conditioned on the
    message. If the message has zero probability under ``(b, a_i)`` the
    message-free interactive update is used instead for that action.
    """

    def __init__(self, frame, space, kind):
        super().__init__(frame, space)
        self.kind = MessageKind(kind) if kind is not None else None
        self._msg_factors = {}

    def message_factor(self, a_i, ctx):
        if self.kind is None or not ctx:
            W, G = self.factor(a_i)
            return W, G, W
        key = (a_i, ctx)
        f = self._msg_factors.get(key)
        if f is None:
            build = _FACTORS[self.kind]
            parts = [build(ms, self.space.physical, a_i, c) for ms, c in zip(self.space.models, ctx)]
            W, G = joint_factor([(p[0], p[1]) for p in parts], self.space.physical.size)
            Wr = _joint_weights([p[2] for p in parts])
            f = (W, G, Wr)
            self._msg_factors[key] = f
        return f

    def message_masses(self, b, a, ctx):
        W, G, _ = self.message_factor(a, ctx)
        return interactive_masses(b, a, self.frame, self.space, W, G)

    def successors(self, b, a, ctx=()):
        masses = self.message_masses(b, a, ctx)
        if masses.sum() < IMPOSSIBLE_MASS and self.kind is not None and ctx:
            return super().successors(b, a)
        return masses

    def expected_reward(self, b, a, ctx=()):
        _, _, Wr = self.message_factor(a, ctx)
        return expected_reward(b, a, self.frame, self.space, Wr)


def _normalized(masses, o_i):
    row = masses[o_i]
    total = row.sum()
    if total < IMPOSSIBLE_MASS:
        raise ImpossibleObservation(f"observation {o_i} has zero likelihood given the messages")
    return row / total


def se_net(b, a_i, o_i, messages, space, frame, kind=None, bound=DEFAULT_PROJECTION_BOUND):
    """Message-conditioned interactive belief update for any number of neighbours.

    ``messages`` holds one message per neighbour (ascending id order), all of
    ``kind`` (inferred from the first message when omitted).
    """
    messages = _as_messages(messages)
    if kind is None:
        kind = messages[0].kind if messages else None
    b = validate_belief(b, space.size)
    if not (0 <= a_i < frame.n_actions and 0 <= o_i < frame.n_observations):
        raise InvalidModel("action or observation outside the frame")
    problem = NetProblem(frame, space, kind)
    ctx = message_context(messages, space, kind, bound)[0] if messages else ()
    return _normalized(problem.message_masses(b, a_i, ctx), o_i)


def _single(message, kind):
    if not isinstance(message, Message):
        raise InvalidModel("single-neighbour updates take one Message")
    if message.kind is not kind:
        raise MessageKindMismatch(f"expected {kind.value} message, got {message.kind.value}")
    return (message,)


def se_net_action(b, a_i, o_i, message, space, frame):
    """Update when the neighbour reports its last executed action."""
    return se_net(b, a_i, o_i, _single(message, MessageKind.ACTION), space, frame, MessageKind.ACTION)


def se_net_belief(b, a_i, o_i, message, space, frame, bound=DEFAULT_PROJECTION_BOUND):
    """Update when the neighbour reports its belief; the posterior model is pinned to the projection."""
    return se_net(b, a_i, o_i, _single(message, MessageKind.BELIEF), space, frame, MessageKind.BELIEF, bound)


def se_net_observation(b, a_i, o_i, message, space, frame):
    """Update when the neighbour reports its current observation."""
    return se_net(
        b, a_i, o_i, _single(message, MessageKind.OBSERVATION), space, frame, MessageKind.OBSERVATION
    )


def combine_neighbors(b, a_i, o_i, factors, space, frame):
    """Joint update from per-neighbour ``(W_n, G_n)`` factors.

    Neighbour actions and observations are taken as conditionally independent
    given the physical transition, so the joint weight and successor kernel
    are products of the per-neighbour ones.
    """
    b = validate_belief(b, space.size)
    W, G = joint_factor([(f[0], f[1]) for f in factors], space.physical.size)
    return _normalized(interactive_masses(b, a_i, frame, space, W, G), o_i)


def er_net(is_index, a_i, messages, space, frame, kind=None, bound=DEFAULT_PROJECTION_BOUND):
    """``sum_{a_nb} R(s, a_i, a_nb) Pr(a_nb | models in is, messages)``."""
    messages = _as_messages(messages)
    if kind is None:
        kind = messages[0].kind if messages else None
    ctx = message_context(messages, space, kind, bound)[0] if messages else ()
    problem = NetProblem(frame, space, kind)
    b = np.zeros(space.size)
    b[is_index] = 1.0
    return problem.expected_reward(b, a_i, ctx)


def _theta_problem(theta, messages, bound):
    messages = _as_messages(messages)
    kind = messages[0].kind if messages else None
    problem = NetProblem(theta.frame, theta.space, kind)
    ctx = message_context(messages, theta.space, kind, bound)[0] if messages else ()
    return problem, ctx


def h_eval(theta, a_i, messages, U, interpolate=False, bound=DEFAULT_PROJECTION_BOUND):
    """``sum_is b(is) ER(is, a_i) + gamma sum_o Pr(o | a_i, b, mu) U(SE(b, a_i, o, mu), mu)``."""
    problem, ctx = _theta_problem(theta, messages, bound)
    return backed_up_value(problem, theta.belief, a_i, ctx, U, interpolate)


def net_backup(U, domain, interpolate=False, bound=DEFAULT_PROJECTION_BOUND):
    """``HU`` on ``domain``, a sequence of ``(type, messages)`` pairs."""
    keys, vals = [], []
    for theta, messages in domain:
        problem, ctx = _theta_problem(theta, messages, bound)
        keys.append((belief_key(theta.belief), ctx))
        vals.append(float(action_values(problem, theta.belief, ctx, U, interpolate).max()))
    return ValueTable(keys, vals)


def net_opt(theta, messages, U, interpolate=False, tie_epsilon=TIE_EPSILON, bound=DEFAULT_PROJECTION_BOUND):
    """Optimal action set for ``(theta, messages)``; execute the first (lowest index)."""
    problem, ctx = _theta_problem(theta, messages, bound)
    return optimal_actions(action_values(problem, theta.belief, ctx, U, interpolate), tie_epsilon)
