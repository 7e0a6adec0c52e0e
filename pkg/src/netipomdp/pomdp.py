"""Finite single-agent POMDP primitives: belief filtering, observation
likelihoods, value backup and optimal-action extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservation, InvalidModel
from .tabulation import (
    IMPOSSIBLE_MASS,
    TIE_EPSILON,
    action_values,
    belief_key,
    direct_backup,
    optimal_actions,
)

STOCHASTIC_TOL = 1e-9


def _labels(spec, prefix):
    if isinstance(spec, (int, np.integer)):
        return tuple(f"{prefix}{i}" for i in range(int(spec)))
    return tuple(spec)


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = _labels(self.labels, "s")
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise InvalidModel("state space must contain at least one state")
        if len(set(labels)) != len(labels):
            raise InvalidModel("state labels must be unique")

    @property
    def size(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)


def stochasticity_violations(name, tensor, axes, tol=STOCHASTIC_TOL):
    """Check that ``tensor`` sums to one over its last axis.

    ``axes`` names the leading axes and is used to label offending slices,
    e.g. ``transition[s=0, a=1, :] sums to 0.9``.
    """
    out = []
    t = np.asarray(tensor, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        out.append(f"{name} has non-finite entries")
        return out
    neg = np.argwhere(t < 0)
    for idx in neg[:5]:
        out.append(f"{name}[{_slice_label(axes, idx[:-1])}{idx[-1]}] is negative")
    sums = t.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > tol)
    for idx in bad[:10]:
        out.append(f"{name}[{_slice_label(axes, idx)}:] sums to {sums[tuple(idx)]:.12g}")
    if len(bad) > 10:
        out.append(f"{name}: {len(bad) - 10} further slices do not sum to 1")
    return out


def _slice_label(axes, idx):
    parts = [f"{n}={int(i)}" for n, i in zip(axes, idx)]
    return ", ".join(parts) + ", " if parts else ""


def validate_belief(b, size=None, name="belief"):
    """Return ``b`` as a float array after checking it is a distribution."""
    arr = np.asarray(b, dtype=np.float64)
    problems = []
    if arr.ndim != 1:
        problems.append(f"{name} must be a vector")
    elif size is not None and arr.shape[0] != size:
        problems.append(f"{name} has length {arr.shape[0]}, expected {size}")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        problems.append(f"{name} has negative or non-finite mass")
    elif abs(arr.sum() - 1.0) > STOCHASTIC_TOL:
        problems.append(f"{name} sums to {arr.sum():.12g}")
    if problems:
        raise InvalidModel(problems)
    return arr


@dataclass(frozen=True, eq=False)
class PomdpFrame:
    """Actions, observations, ``T[s, a, s']``, ``O[s', a, o]``, ``R[s, a]`` and discount.

    Frames compare by identity: two models share a frame only if they hold the
    same frame object.
    """

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    actions: tuple = None
    observations: tuple = None
    state_space: StateSpace = None
    name: str = field(default="")

    def __post_init__(self):
        T = np.array(self.transition, dtype=np.float64)
        O = np.array(self.observation, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        problems = []
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise InvalidModel("transition must have shape (S, A, S)")
        S, A = T.shape[:2]
        if O.ndim != 3 or O.shape[:2] != (S, A):
            raise InvalidModel(f"observation must have shape ({S}, {A}, O)")
        if R.shape != (S, A):
            raise InvalidModel(f"reward must have shape ({S}, {A})")
        if not np.all(np.isfinite(R)):
            problems.append("reward has non-finite entries")
        problems += stochasticity_violations("transition", T, ("s", "a"))
        problems += stochasticity_violations("observation", O, ("s'", "a"))
        if not 0.0 < float(self.discount) < 1.0:
            problems.append(f"discount {self.discount} outside (0, 1)")
        actions = _labels(self.actions if self.actions is not None else A, "a")
        observations = _labels(self.observations if self.observations is not None else O.shape[2], "o")
        if len(actions) != A or len(observations) != O.shape[2]:
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
        return self.observation.shape[2]


def _check_indices(f, a, o=None):
    if not 0 <= a < f.n_actions:
        raise InvalidModel(f"action {a} not in frame (|A|={f.n_actions})")
    if o is not None and not 0 <= o < f.n_observations:
        raise InvalidModel(f"observation {o} not in frame (|Ω|={f.n_observations})")


def _masses(b, a, f):
    pred = b @ f.transition[:, a, :]
    return f.observation[:, a, :].T * pred[None, :]


def obs_likelihood(b, a, f):
    """``Pr(o | a, b) = sum_{s'} O(s', a, o) sum_s b(s) T(s, a, s')``."""
    b = validate_belief(b, f.n_states)
    _check_indices(f, a)
    return _masses(b, a, f).sum(axis=1)


def se_pomdp(b, a, o, f):
    """Bayes filter ``b'(s') ∝ O(s', a, o) sum_s b(s) T(s, a, s')``."""
    b = validate_belief(b, f.n_states)
    _check_indices(f, a, o)
    mass = _masses(b, a, f)[o]
    total = mass.sum()
    if total < IMPOSSIBLE_MASS:
        raise ImpossibleObservation(
            f"observation {f.observations[o]!r} has zero likelihood after action {f.actions[a]!r}"
        )
    return mass / total


class PomdpProblem:
    """Belief-problem adapter for tabulation; the context is always ``()``."""

    def __init__(self, frame):
        self.frame = frame
        self.n_actions = frame.n_actions
        self.n_observations = frame.n_observations
        self.discount = frame.discount

    def successors(self, b, a, ctx=()):
        return _masses(b, a, self.frame)

    def expected_reward(self, b, a, ctx=()):
        return float(b @ self.frame.reward[:, a])


def _points(pts):
    return [(validate_belief(b), ()) for b in pts]


def pomdp_value_backup(U, pts, f, interpolate=False):
    """Apply the belief-space Bellman backup to table ``U`` at each belief in ``pts``.

    ``U`` must hold every one-step successor of ``pts`` unless ``interpolate``
    is set, in which case a missing successor reads its nearest tabulated
    neighbour. Returns a new table keyed on ``pts``.
    """
    return direct_backup(PomdpProblem(f), U, _points(pts), interpolate)


def pomdp_opt(b, U, f, interpolate=False, tie_epsilon=TIE_EPSILON):
    """The set of optimal actions at ``b`` against table ``U`` (lowest index first)."""
    b = validate_belief(b, f.n_states)
    q = action_values(PomdpProblem(f), b, (), U, interpolate)
    return optimal_actions(q, tie_epsilon)


def table_key(b, ctx=()):
    return (belief_key(b), ctx)
