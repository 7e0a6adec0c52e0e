"""Finite tabulation of value functions over reachable belief sets.

Every layer (plain POMDP, interactive POMDP, networked I-POMDP) exposes a
*belief problem*: an object with

* ``n_actions``, ``n_observations``, ``discount``
* ``successors(b, a, ctx)`` returning an ``(n_observations, len(b))`` array of
  unnormalized posterior masses, one row per observation
* ``expected_reward(b, a, ctx)``

``ctx`` is a hashable context that stays fixed along a trajectory of the
graph (the incoming-message key for networked agents, ``()`` otherwise).
Table keys are ``(belief_key(b), ctx)``.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from . import kernels
from .errors import IterationCapExceeded, KeyMismatch, MissingEntry

KEY_DECIMALS = 12
IMPOSSIBLE_MASS = 1e-12
TIE_EPSILON = 1e-9


def belief_key(b):
    """Hashable key of a belief: coordinates rounded to 12 decimals."""
    r = np.round(np.asarray(b, dtype=np.float64), KEY_DECIMALS) + 0.0  # folds -0.0
    return r.tobytes()


def key_to_belief(key):
    """Recover the rounded belief vector from a table key or belief key."""
    raw = key[0] if isinstance(key, tuple) else key
    return np.frombuffer(raw, dtype=np.float64)


def tv_distance(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def optimal_actions(q, tie_epsilon=TIE_EPSILON):
    """Every action within ``tie_epsilon`` of the best backed-up value."""
    q = np.asarray(q)
    best = q.max()
    return tuple(int(a) for a in np.flatnonzero(q >= best - tie_epsilon))


class ValueTable:
    """Values keyed by ``(belief key, message key)``; treat as immutable."""

    __slots__ = ("keys", "index", "values")

    def __init__(self, keys, values=None):
        self.keys = list(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise ValueError("duplicate keys in value table")
        if values is None:
            arr = np.zeros(len(self.keys))
        else:
            arr = np.array(values, dtype=np.float64)
            if arr.shape != (len(self.keys),):
                raise ValueError("values must align with keys")
        if not np.all(np.isfinite(arr)):
            raise ValueError("value table entries must be finite")
        arr.flags.writeable = False
        self.values = arr

    @classmethod
    def from_dict(cls, mapping):
        return cls(list(mapping), list(mapping.values()))

    def with_values(self, values):
        out = ValueTable.__new__(ValueTable)
        out.keys = self.keys
        out.index = self.index
        arr = np.array(values, dtype=np.float64)
        arr.flags.writeable = False
        out.values = arr
        return out

    def __getitem__(self, key):
        try:
            return float(self.values[self.index[key]])
        except KeyError:
            raise MissingEntry(f"no tabulated value for key {_describe(key)}") from None

    def get(self, key, default=None):
        i = self.index.get(key)
        return default if i is None else float(self.values[i])

    def __contains__(self, key):
        return key in self.index

    def __len__(self):
        return len(self.keys)

    def items(self):
        return zip(self.keys, self.values.tolist())

    def as_dict(self):
        return dict(self.items())

    def __repr__(self):
        return f"ValueTable({len(self)} entries)"


def sup_norm(U, V):
    """Maximum absolute entrywise difference over identical key sets."""
    if len(U) != len(V) or any(k not in V.index for k in U.keys):
        raise KeyMismatch("value tables have different key sets")
    if U.keys == V.keys or U.index is V.index:
        return float(np.max(np.abs(U.values - V.values), initial=0.0))
    order = np.fromiter((V.index[k] for k in U.keys), dtype=np.int64, count=len(U))
    return float(np.max(np.abs(U.values - V.values[order]), initial=0.0))


def _describe(key):
    if isinstance(key, tuple) and key and isinstance(key[0], bytes) and len(key[0]) % 8 == 0:
        return f"(belief={np.round(key_to_belief(key), 6).tolist()}, message={key[1]!r})"
    return repr(key)


class BeliefGraph:
    """Tabulated belief points with their one-step successor structure.

    For node ``p`` and action ``a``: ``rewards[p, a]`` is the expected immediate
    reward, ``probs[p, a, o]`` the normalized observation likelihood and
    ``succ[p, a, o]`` the successor node (``-1`` when the observation is
    impossible or the successor was dropped).

    Successors beyond the expansion depth are resolved to the nearest tabulated
    belief with the same context (total variation, lowest index on ties) unless
    ``frontier="drop"``. Such approximate edges are repointed when their exact
    successor is later added.
    """

    def __init__(self, problem, depth=4, frontier="nearest"):
        if frontier not in ("nearest", "drop"):
            raise ValueError("frontier must be 'nearest' or 'drop'")
        self.problem = problem
        self.depth = int(depth)
        self.frontier = frontier
        self.discount = float(problem.discount)
        self.n_actions = int(problem.n_actions)
        self.n_observations = int(problem.n_observations)
        self.keys = []
        self.index = {}
        self.points = []
        self.contexts = []
        self.depths = []
        self.online = []
        self._r = []
        self._p = []
        self._s = []
        self._approx = defaultdict(list)  # raw key -> [(node, a, o)]
        self._by_ctx = defaultdict(list)
        self._ctx_stack = {}
        self._arrays = None

    def __len__(self):
        return len(self.keys)

    # -- construction -------------------------------------------------
    def _new_node(self, b, ctx, depth, online=False):
        key = (belief_key(b), ctx)
        i = len(self.keys)
        self.keys.append(key)
        self.index[key] = i
        self.points.append(np.asarray(b, dtype=np.float64))
        self.contexts.append(ctx)
        self.depths.append(depth)
        self.online.append(online)
        self._r.append(np.zeros(self.n_actions))
        self._p.append(np.zeros((self.n_actions, self.n_observations)))
        self._s.append(np.full((self.n_actions, self.n_observations), -1, dtype=np.int64))
        self._by_ctx[ctx].append(i)
        self._ctx_stack.pop(ctx, None)
        self._arrays = None
        return i

    def _expand(self, i, deferred, grow):
        b, ctx, d = self.points[i], self.contexts[i], self.depths[i]
        problem = self.problem
        for a in range(self.n_actions):
            self._r[i][a] = problem.expected_reward(b, a, ctx)
            masses = problem.successors(b, a, ctx)
            lik = masses.sum(axis=1)
            total = lik.sum()
            if total < IMPOSSIBLE_MASS:
                continue
            for o in range(self.n_observations):
                if lik[o] < IMPOSSIBLE_MASS:
                    continue
                self._p[i][a, o] = lik[o] / total
                post = masses[o] / lik[o]
                key = (belief_key(post), ctx)
                j = self.index.get(key)
                if j is None and grow and d < self.depth:
                    j = self._new_node(post, ctx, d + 1)
                if j is None:
                    deferred.append((i, a, o, key, post))
                else:
                    self._s[i][a, o] = j

    def _resolve(self, deferred):
        for i, a, o, key, post in deferred:
            j = self.index.get(key)
            if j is not None:
                self._s[i][a, o] = j
                continue
            if self.frontier == "drop":
                self._s[i][a, o] = -1
            else:
                self._s[i][a, o] = self.nearest(post, self.contexts[i])[0]
            self._approx[key].append((i, a, o))
        self._arrays = None

    def grow(self, seeds):
        """Add seed beliefs ``[(b, ctx), ...]`` and their closure to ``depth``."""
        start = len(self.keys)
        for b, ctx in seeds:
            key = (belief_key(b), ctx)
            if key not in self.index:
                self._new_node(b, ctx, 0)
        deferred = []
        i = start
        while i < len(self.keys):
            self._expand(i, deferred, grow=True)
            i += 1
        self._repoint(range(start, len(self.keys)))
        self._resolve(deferred)
        return list(range(start, len(self.keys)))

    def add_online(self, b, ctx):
        """Add one point discovered at run time (no closure); returns ``(index, is_new)``."""
        key = (belief_key(b), ctx)
        if key in self.index:
            return self.index[key], False
        i = self._new_node(b, ctx, self.depth, online=True)
        deferred = []
        self._expand(i, deferred, grow=False)
        self._repoint([i])
        self._resolve(deferred)
        return i, True

    def _repoint(self, new_nodes):
        for j in new_nodes:
            for i, a, o in self._approx.pop(self.keys[j], ()):
                self._s[i][a, o] = j
        self._arrays = None

    # -- lookup -------------------------------------------------------
    def nearest(self, b, ctx):
        idx = self._by_ctx.get(ctx)
        if not idx:
            raise MissingEntry(f"no tabulated beliefs for message key {ctx!r}")
        stack = self._ctx_stack.get(ctx)
        if stack is None:
            stack = np.ascontiguousarray(np.stack([self.points[k] for k in idx]))
            self._ctx_stack[ctx] = stack
        k, dist = kernels.nearest_tv(stack, np.asarray(b, dtype=np.float64))
        return idx[k], dist

    def find(self, b, ctx):
        return self.index.get((belief_key(b), ctx))

    def _stacked(self):
        if self._arrays is None:
            n = len(self.keys)
            if n:
                self._arrays = (np.stack(self._r), np.stack(self._p), np.stack(self._s))
            else:
                self._arrays = (
                    np.zeros((0, self.n_actions)),
                    np.zeros((0, self.n_actions, self.n_observations)),
                    np.zeros((0, self.n_actions, self.n_observations), dtype=np.int64),
                )
        return self._arrays

    @property
    def rewards(self):
        return self._stacked()[0]

    @property
    def probs(self):
        return self._stacked()[1]

    @property
    def succ(self):
        return self._stacked()[2]

    def zero_table(self):
        return ValueTable(self.keys)

    def table(self, values):
        return ValueTable(self.keys, values)

    # -- value iteration ----------------------------------------------
    def sweep(self, values):
        """One backup ``HU`` of a value vector aligned to the graph's nodes."""
        r, p, s = self._stacked()
        return kernels.bellman_sweep(r, p, s, values, self.discount)

    def solve(self, epsilon=1e-10, max_iter=100000, init=None):
        """Iterate sweeps until the sup-norm delta drops below ``epsilon``.

        Returns ``(values, q, iterations, deltas)``.
        """
        values = np.zeros(len(self)) if init is None else np.array(init, dtype=np.float64)
        deltas = []
        q = None
        for it in range(1, max_iter + 1):
            new, q = self.sweep(values)
            delta = float(np.max(np.abs(new - values), initial=0.0))
            deltas.append(delta)
            values = new
            if delta < epsilon:
                return values, q, it, deltas
        raise IterationCapExceeded(f"no convergence to {epsilon} within {max_iter} sweeps")


def tabulate(problem, seeds, depth=4, frontier="nearest"):
    """Build the reachable-set graph of ``seeds`` (``[(b, ctx), ...]``)."""
    graph = BeliefGraph(problem, depth=depth, frontier=frontier)
    graph.grow(seeds)
    return graph


def backed_up_value(problem, b, a, ctx, U, interpolate=False):
    """``ER(b, a) + gamma * sum_o Pr(o | a, b) U(SE(b, a, o), ctx)``.

    Successors are looked up by exact key; with ``interpolate`` a missing
    successor takes the value of the nearest tabulated belief sharing ``ctx``.
    """
    masses = problem.successors(b, a, ctx)
    lik = masses.sum(axis=1)
    total = lik.sum()
    cont = 0.0
    if total >= IMPOSSIBLE_MASS:
        for o in range(problem.n_observations):
            if lik[o] < IMPOSSIBLE_MASS:
                continue
            post = masses[o] / lik[o]
            cont += (lik[o] / total) * _lookup(U, post, ctx, interpolate)
    return problem.expected_reward(b, a, ctx) + problem.discount * cont


def action_values(problem, b, ctx, U, interpolate=False):
    """:func:`backed_up_value` for every action."""
    return np.array(
        [backed_up_value(problem, b, a, ctx, U, interpolate) for a in range(problem.n_actions)]
    )


def _lookup(U, post, ctx, interpolate):
    key = (belief_key(post), ctx)
    v = U.get(key)
    if v is not None:
        return v
    if not interpolate:
        raise MissingEntry(f"no tabulated value for successor {_describe(key)}")
    best, best_d = None, None
    for k, val in U.items():
        if k[1] != ctx:
            continue
        d = tv_distance(key_to_belief(k), post)
        if best_d is None or d < best_d:
            best, best_d = val, d
    if best is None:
        raise MissingEntry(f"no tabulated beliefs for message key {ctx!r}")
    return best


def direct_backup(problem, U, points, interpolate=False):
    """``HU`` evaluated point by point; ``points`` is a sequence of ``(b, ctx)``."""
    keys, vals = [], []
    for b, ctx in points:
        keys.append((belief_key(b), ctx))
        vals.append(float(action_values(problem, b, ctx, U, interpolate).max()))
    return ValueTable(keys, vals)
