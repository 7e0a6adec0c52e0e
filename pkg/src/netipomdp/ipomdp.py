"""Bounded-nesting interactive POMDPs.

An interactive state is a pair (physical state, neighbour model). Neighbour
models are agent types (belief + frame) drawn from a finite :class:`ModelSet`:
the closure of declared seed beliefs under the models' own belief updates up
to an expansion depth. Each model set is solved once so that every member has
an action distribution (uniform over its optimal actions) and a successor
table used as the 0/1 indicator of the interactive update.

Interactive beliefs are flat vectors over ``S x K_1 x ... x K_n`` in row-major
(physical-state-major) order.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import kernels
from .errors import (
    ImpossibleObservation,
    InvalidModel,
    LevelMismatch,
    RecursionDepthExceeded,
    UnsupportedModel,
)
from .pomdp import (
    PomdpFrame,
    PomdpProblem,
    StateSpace,
    _labels,
    se_pomdp,
    stochasticity_violations,
    validate_belief,
)
from .tabulation import (
    IMPOSSIBLE_MASS,
    TIE_EPSILON,
    action_values,
    belief_key,
    direct_backup,
    optimal_actions,
    tabulate,
)

DEFAULT_DEPTH = 4
DEFAULT_MAX_LEVEL = 2
SOLVE_EPSILON = 1e-11


@dataclass(frozen=True, eq=False)
class NetFrame:
    """Frame of an agent that interacts with ``len(neighbor_actions)`` neighbours.

    Tensors are indexed ``T[s, a_i, a_nb, s']``, ``O[s', a_i, a_nb, o_i]`` and
    ``R[s, a_i, a_nb]`` where ``a_nb`` is the row-major flattening of the
    neighbours' joint action (neighbours in ascending id order). With no
    neighbours the ``a_nb`` axis has length one.
    """

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    neighbor_actions: tuple = ()
    actions: tuple = None
    observations: tuple = None
    state_space: StateSpace = None
    name: str = field(default="")

    def __post_init__(self):
        T = np.array(self.transition, dtype=np.float64)
        O = np.array(self.observation, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        nb = tuple(int(n) for n in self.neighbor_actions)
        if T.ndim != 4 or T.shape[0] != T.shape[3]:
            raise InvalidModel("transition must have shape (S, A, A_nb, S)")
        S, A, Anb = T.shape[:3]
        problems = []
        if Anb != math.prod(nb):
            problems.append(f"joint neighbour action axis has {Anb} entries, expected {math.prod(nb)}")
        if O.ndim != 4 or O.shape[:3] != (S, A, Anb):
            raise InvalidModel(f"observation must have shape ({S}, {A}, {Anb}, O)")
        if R.shape != (S, A, Anb):
            raise InvalidModel(f"reward must have shape ({S}, {A}, {Anb})")
        if not np.all(np.isfinite(R)):
            problems.append("reward has non-finite entries")
        problems += stochasticity_violations("transition", T, ("s", "a_i", "a_nb"))
        problems += stochasticity_violations("observation", O, ("s'", "a_i", "a_nb"))
        if not 0.0 < float(self.discount) < 1.0:
            problems.append(f"discount {self.discount} outside (0, 1)")
        actions = _labels(self.actions if self.actions is not None else A, "a")
        observations = _labels(self.observations if self.observations is not None else O.shape[3], "o")
        if len(actions) != A or len(observations) != O.shape[3]:
            problems.append("action/observation labels do not match tensor shapes")
        space = self.state_space if self.state_space is not None else StateSpace(S)
        if space.size != S:
            problems.append("state space size does not match tensors")
        if problems:
            raise InvalidModel(problems)
        for arr in (T, O, R):
            arr.flags.writeable = False
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "observation", O)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "neighbor_actions", nb)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "observations", observations)
        object.__setattr__(self, "state_space", space)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def n_observations(self):
        return self.observation.shape[3]

    @property
    def n_neighbors(self):
        return len(self.neighbor_actions)


def level0_frame(frame, neighbor_policy=None, name=""):
    """Single-agent view of a :class:`NetFrame` with neighbours treated as noise.

    ``neighbor_policy`` is a distribution over the joint neighbour action
    (uniform by default). Transition, observation and reward are averaged
    under it.
    """
    Anb = frame.transition.shape[2]
    p = np.full(Anb, 1.0 / Anb) if neighbor_policy is None else validate_belief(neighbor_policy, Anb, "neighbor_policy")
    T = np.einsum("sanx,n->sax", frame.transition, p)
    O = np.einsum("xano,n->xao", frame.observation, p)
    R = np.einsum("san,n->sa", frame.reward, p)
    return PomdpFrame(T, O, R, frame.discount, frame.actions, frame.observations, frame.state_space, name)


@dataclass(frozen=True, eq=False)
class InteractiveStateSpace:
    """``S x M_1 x ... x M_n`` enumerated physical-state-major."""

    physical: StateSpace
    models: tuple

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def model_counts(self):
        return tuple(len(m) for m in self.models)

    @property
    def n_joint_models(self):
        return math.prod(self.model_counts)

    @property
    def size(self):
        return self.physical.size * self.n_joint_models

    def __len__(self):
        return self.size

    @property
    def points(self):
        return list(product(range(self.physical.size), *(range(k) for k in self.model_counts)))

    def unravel(self, index):
        return np.unravel_index(index, (self.physical.size,) + self.model_counts)

    def physical_marginal(self, b):
        return np.asarray(b).reshape(self.physical.size, -1).sum(axis=1)


@dataclass(frozen=True, eq=False)
class AgentType:
    """A belief paired with a frame at nesting level ``level``.

    Level 0 types hold a :class:`PomdpFrame` and a belief over physical
    states; level ``l >= 1`` types hold a :class:`NetFrame` and a belief over
    ``space``, whose model sets sit at levels ``<= l - 1``.
    """

    belief: np.ndarray
    frame: object
    level: int = 0
    space: InteractiveStateSpace = None

    def __post_init__(self):
        if self.level < 0:
            raise InvalidModel("level must be non-negative")
        if self.level == 0:
            if not isinstance(self.frame, PomdpFrame):
                raise InvalidModel("level-0 types need a PomdpFrame")
            size = self.frame.n_states
        else:
            if not isinstance(self.frame, NetFrame) or self.space is None:
                raise InvalidModel("level >= 1 types need a NetFrame and an interactive space")
            if len(self.space.models) != self.frame.n_neighbors:
                raise InvalidModel("interactive space has one model set per neighbour")
            for ms in self.space.models:
                if ms.level > self.level - 1:
                    raise LevelMismatch(f"level-{self.level} type holds models at level {ms.level}")
            size = self.space.size
        b = validate_belief(self.belief, size)
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "belief", b)

    @property
    def n_actions(self):
        return self.frame.n_actions

    @property
    def n_observations(self):
        return self.frame.n_observations

    def physical_marginal(self):
        if self.level == 0:
            return self.belief
        return self.space.physical_marginal(self.belief)


def build_interactive_space(S, candidates, level):
    """``IS = S x candidates`` for an agent at ``level``."""
    if level < 1:
        raise LevelMismatch("interactive spaces exist from level 1")
    sets = candidates if isinstance(candidates, (tuple, list)) else (candidates,)
    for ms in sets:
        if ms.level != level - 1:
            raise LevelMismatch(f"candidate models at level {ms.level}, expected {level - 1}")
    return InteractiveStateSpace(S, tuple(sets))


def problem_for(t):
    """Belief problem that drives a type's own updates."""
    if t.level == 0:
        return PomdpProblem(t.frame)
    return IPomdpProblem(t.frame, t.space)


def own_update(t, a, o):
    """The type's own belief update ``SE_theta(b, a, o)``."""
    if t.level == 0:
        return se_pomdp(t.belief, a, o, t.frame)
    return se_ipomdp(t.belief, a, o, t.space, t.frame)


class ModelSet:
    """Finite, solved set of candidate neighbour models.

    Attributes: ``models`` (tuple of :class:`AgentType`), ``successor[k, a, o]``
    (index of the resolved own-update successor, ``-1`` if impossible or
    dropped), ``likelihood[k, a, o]`` (the model's predictive ``Pr(o | a, b_k)``),
    ``action_dist[k, a]`` (uniform over the model's optimal actions),
    ``group[k]`` (frame group id).
    """

    def __init__(self, models, successor, likelihood, action_dist, values, group, level):
        self.models = tuple(models)
        self.successor = successor
        self.likelihood = likelihood
        self.action_dist = action_dist
        self.values = values
        self.group = group
        self.level = level
        self.n_actions = action_dist.shape[1]
        self.n_observations = likelihood.shape[2]
        self._cache = {}
        self._lock = threading.Lock()
        for arr in (successor, likelihood, action_dist, values, group):
            arr.flags.writeable = False

    def __len__(self):
        return len(self.models)

    def __getitem__(self, k):
        return self.models[k]

    def opt(self, k):
        return tuple(int(a) for a in np.flatnonzero(self.action_dist[k] > 0))

    def tau(self, k, a, o, k_target):
        return int(self.successor[k, a, o] == k_target)

    def beliefs_physical(self):
        return np.stack([m.physical_marginal() for m in self.models])

    def cached(self, key, build):
        value = self._cache.get(key)
        if value is None:
            value = build()
            with self._lock:
                value = self._cache.setdefault(key, value)
        return value

    def __repr__(self):
        return f"ModelSet({len(self)} models, level {self.level})"


def build_model_set(seeds, depth=DEFAULT_DEPTH, frontier="nearest", max_level=DEFAULT_MAX_LEVEL,
                    solve_epsilon=SOLVE_EPSILON):
    """Close ``seeds`` under their own belief updates and solve every member.

    Seeds sharing a frame (and interactive space) form one group; groups keep
    first-appearance order and members within a group are in breadth-first
    order. ``depth=0`` keeps exactly the distinct seeds, with every successor
    resolved to its nearest group member.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidModel("a model set needs at least one model")
    n_actions, n_obs = seeds[0].n_actions, seeds[0].n_observations
    for t in seeds:
        if t.level > max_level - 1:
            raise RecursionDepthExceeded(
                f"model at level {t.level} exceeds the nesting bound {max_level}"
            )
        if (t.n_actions, t.n_observations) != (n_actions, n_obs):
            raise InvalidModel("all candidate models must share action and observation spaces")
    groups = {}
    for t in seeds:
        groups.setdefault((id(t.frame), id(t.space)), []).append(t)
    models, succ, lik, dist, vals, gid = [], [], [], [], [], []
    for g, members in enumerate(groups.values()):
        head = members[0]
        graph = tabulate(problem_for(head), [(t.belief, ()) for t in members], depth, frontier)
        values, q, _, _ = graph.solve(epsilon=solve_epsilon)
        offset = len(models)
        for i, b in enumerate(graph.points):
            models.append(AgentType(b, head.frame, head.level, head.space))
            d = np.zeros(n_actions)
            d[list(optimal_actions(q[i], TIE_EPSILON))] = 1.0
            dist.append(d / d.sum())
        s = graph.succ.copy()
        s[s >= 0] += offset
        succ.append(s)
        lik.append(graph.probs)
        vals.append(values)
        gid += [g] * len(graph)
    return ModelSet(
        models,
        np.concatenate(succ),
        np.concatenate(lik),
        np.stack(dist),
        np.concatenate(vals),
        np.array(gid, dtype=np.int64),
        max(t.level for t in seeds),
    )


def model_action_dist(m, depth=DEFAULT_DEPTH, max_level=DEFAULT_MAX_LEVEL, solve_epsilon=SOLVE_EPSILON):
    """``Pr(a | m)``: uniform over the model's optimal actions, zero elsewhere."""
    if m.level > max_level:
        raise RecursionDepthExceeded(f"model at level {m.level} exceeds the nesting bound {max_level}")
    graph = tabulate(problem_for(m), [(m.belief, ())], depth)
    _, q, _, _ = graph.solve(epsilon=solve_epsilon)
    d = np.zeros(m.n_actions)
    d[list(optimal_actions(q[0], TIE_EPSILON))] = 1.0
    return d / d.sum()


def tau_indicator(m, a_j, o_j, b_target):
    """1 iff the model's own update of ``(m.belief, a_j, o_j)`` keys equal to ``b_target``."""
    try:
        post = own_update(m, a_j, o_j)
    except ImpossibleObservation:
        return 0
    target = b_target.belief if isinstance(b_target, AgentType) else b_target
    return int(belief_key(post) == belief_key(target))


# -- neighbour factors ------------------------------------------------------


def neighbor_obs_table(ms, observer_space, a_i):
    """``Oj[k, s', a_j, o_j]``: each model's observation probabilities seen from the observer.

    When a model's frame lives on the observer's physical state space its own
    observation tensor is read at the observer's successor state (for a
    level >= 1 model, its single neighbour is taken to be the observer, acting
    ``a_i``). Otherwise the model's own predictive likelihood is used for every
    observer state.
    """

    def build():
        S = observer_space.size
        K, A, O = len(ms), ms.n_actions, ms.n_observations
        out = np.empty((K, S, A, O))
        for k, m in enumerate(ms.models):
            f = m.frame
            if f.state_space == observer_space:
                if isinstance(f, PomdpFrame):
                    out[k] = f.observation
                elif f.n_neighbors == 1:
                    out[k] = f.observation[:, :, a_i, :]
                else:
                    raise UnsupportedModel("nested models with several neighbours are not supported")
            else:
                out[k] = ms.likelihood[k][None, :, :]
        out.flags.writeable = False
        return out

    return ms.cached(("obs", observer_space, a_i), build)


def marginal_factor(ms, observer_space, a_i):
    """Weights and successor kernel of the message-free update.

    ``W[k, a_j] = Pr(a_j | m_k)`` and
    ``G[k, a_j, s', k'] = sum_{o_j} tau(k, a_j, o_j, k') Oj(s', a_i, a_j, o_j)``.
    """

    def build():
        oj = neighbor_obs_table(ms, observer_space, a_i)
        K, S, A, O = oj.shape
        G = np.zeros((K, A, S, K))
        for k in range(K):
            for a in range(A):
                for o in range(O):
                    k2 = ms.successor[k, a, o]
                    if k2 >= 0:
                        G[k, a, :, k2] += oj[k, :, a, o]
        G.flags.writeable = False
        return ms.action_dist, G

    return ms.cached(("marginal", observer_space, a_i), build)


def joint_factor(factors, n_states):
    """Combine per-neighbour ``(W_n, G_n)`` assuming conditional independence given the state transition."""
    if not factors:
        return np.ones((1, 1)), np.ones((1, 1, n_states, 1))
    W, G = factors[0]
    for Wn, Gn in factors[1:]:
        K1, A1 = W.shape
        K2, A2 = Wn.shape
        W = (W[:, None, :, None] * Wn[None, :, None, :]).reshape(K1 * K2, A1 * A2)
        G = (G[:, None, :, None, :, :, None] * Gn[None, :, None, :, :, None, :]).reshape(
            K1 * K2, A1 * A2, n_states, K1 * K2
        )
    return W, G


def interactive_masses(b, a_i, frame, space, W, G):
    """Unnormalized posteriors for every observation: shape ``(|Ω_i|, |IS|)``."""
    S = space.physical.size
    b2 = np.asarray(b, dtype=np.float64).reshape(S, -1)
    out = kernels.interactive_masses(
        b2, W, frame.transition[:, a_i, :, :], frame.observation[:, a_i, :, :], G
    )
    return out.reshape(out.shape[0], -1)


def expected_reward(b, a_i, frame, space, W):
    """``sum_is b(is) sum_{a_nb} R(s, a_i, a_nb) Pr(a_nb | models in is)``."""
    S = space.physical.size
    b2 = np.asarray(b, dtype=np.float64).reshape(S, -1)
    return float(np.einsum("sk,sn,kn->", b2, frame.reward[:, a_i, :], W))


def _check_frame_space(frame, space):
    if frame.n_neighbors != len(space.models):
        raise InvalidModel("frame and interactive space disagree on the number of neighbours")
    if frame.n_states != space.physical.size:
        raise InvalidModel("frame and interactive space disagree on the physical states")
    for n, ms in zip(frame.neighbor_actions, space.models):
        if ms.n_actions != n:
            raise InvalidModel("neighbour model actions do not match the frame")


class IPomdpProblem:
    """Belief problem for the message-free interactive update."""

    def __init__(self, frame, space):
        _check_frame_space(frame, space)
        self.frame = frame
        self.space = space
        self.n_actions = frame.n_actions
        self.n_observations = frame.n_observations
        self.discount = frame.discount
        self._factors = {}

    def factor(self, a_i):
        f = self._factors.get(a_i)
        if f is None:
            f = joint_factor(
                [marginal_factor(ms, self.space.physical, a_i) for ms in self.space.models],
                self.space.physical.size,
            )
            self._factors[a_i] = f
        return f

    def successors(self, b, a, ctx=()):
        W, G = self.factor(a)
        return interactive_masses(b, a, self.frame, self.space, W, G)

    def expected_reward(self, b, a, ctx=()):
        W, _ = self.factor(a)
        return expected_reward(b, a, self.frame, self.space, W)


def _normalize(masses, o, frame):
    row = masses[o]
    total = row.sum()
    if total < IMPOSSIBLE_MASS:
        raise ImpossibleObservation(f"observation {frame.observations[o]!r} has zero likelihood")
    return row / total


def _check_action_obs(frame, a, o):
    if not 0 <= a < frame.n_actions:
        raise InvalidModel(f"action {a} not in frame")
    if not 0 <= o < frame.n_observations:
        raise InvalidModel(f"observation {o} not in frame")


def se_ipomdp(b, a_i, o_i, space, frame):
    """Interactive belief update without messages.

    ``b'(s', k') ∝ sum_{s,k} b(s,k) sum_{a_j} Pr(a_j|k) O_i(s', a, o_i) T_i(s, a, s')
    sum_{o_j} tau(k, a_j, o_j, k') O_j(s', a, o_j)``, summing only over priors
    whose frame matches the successor's.
    """
    b = validate_belief(b, space.size)
    _check_action_obs(frame, a_i, o_i)
    problem = IPomdpProblem(frame, space)
    return _normalize(problem.successors(b, a_i), o_i, frame)


def er_reward(is_index, a_i, space, frame):
    """``ER(is, a_i) = sum_{a_nb} R(s, a_i, a_nb) Pr(a_nb | models in is)``."""
    idx = space.unravel(is_index)
    s, ks = int(idx[0]), [int(k) for k in idx[1:]]
    weights = np.ones(1)
    for ms, k in zip(space.models, ks):
        weights = np.outer(weights, ms.action_dist[k]).ravel()
    return float(frame.reward[s, a_i, :] @ weights)


def _as_points(pts):
    out = []
    for p in pts:
        b = p.belief if isinstance(p, AgentType) else p
        out.append((validate_belief(b), ()))
    return out


def ipomdp_value_backup(U, pts, space, frame, interpolate=False):
    """Interactive Bellman backup of ``U`` at each belief in ``pts``."""
    return direct_backup(IPomdpProblem(frame, space), U, _as_points(pts), interpolate)


def ipomdp_opt(theta, U, interpolate=False, tie_epsilon=TIE_EPSILON):
    """Optimal action set of a level >= 1 type against table ``U``."""
    q = action_values(IPomdpProblem(theta.frame, theta.space), theta.belief, (), U, interpolate)
    return optimal_actions(q, tie_epsilon)
