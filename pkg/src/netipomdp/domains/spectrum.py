"""Decentralized downlink spectrum sharing.

Each base station serves one user and decides per slot whether to transmit.
Its local state is its averaged rate (a point of a finite log-spaced grid)
together with the channel realization; the per-slot reward is the slot's
share of the log-average-rate fairness objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..errors import DegenerateAverage, GridTooCoarse, InvalidModel
from ..ipomdp import AgentType, NetFrame, build_interactive_space, build_model_set, level0_frame
from ..net import CommGraph, validate_graph
from ..pomdp import StateSpace
from ..solver import AgentSpec, Scenario, SimulationConfig

SILENT, TRANSMIT = 0, 1


@dataclass(frozen=True)
class Fading:
    """Two-state Markov fading: every gain into a user is scaled by ``gains[c]``; ``c`` flips w.p. ``flip``."""

    gains: tuple = (1.0, 1.0)
    flip: float = 0.0


@dataclass(frozen=True)
class SpectrumConfig:
    channel: np.ndarray  # channel[j, i]: gain from station j to user i
    bandwidth: float = 1.0
    power: float = 1.0
    noise: float = 0.1
    averaging: float = 10.0
    grid: tuple = (0.5, 1.0, 2.0)
    edges: tuple = None
    fading: Fading = None
    non_neighbor_transmit: bool = True
    reward_error_bound: float = math.inf
    observation_grid: tuple = None  # optional log-grid for signal/interference observations

    def __post_init__(self):
        h = np.array(self.channel, dtype=np.float64)
        if h.ndim == 0:
            h = h.reshape(1, 1)
        object.__setattr__(self, "channel", h)
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        n = h.shape[0]
        if self.edges is None:
            edges = tuple((i, i + 1) for i in range(n - 1))
        else:
            edges = tuple(tuple(int(x) for x in e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        problems = []
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            problems.append("channel must be an N x N matrix")
        elif np.any(h < 0) or not np.all(np.isfinite(h)):
            problems.append("channel gains must be finite and non-negative")
        if not self.averaging > 1:
            problems.append(f"averaging parameter {self.averaging} must exceed 1")
        g = np.array(self.grid)
        if len(g) < 1 or np.any(g <= 0):
            problems.append("average-rate grid must be non-empty and strictly positive")
        elif np.any(np.diff(g) <= 0):
            problems.append("average-rate grid must be strictly increasing")
        if not (self.bandwidth > 0 and self.power > 0 and self.noise > 0):
            problems.append("bandwidth, power and noise must be positive")
        fad = self.fading
        if fad is not None:
            if len(fad.gains) != 2 or min(fad.gains) < 0 or not 0 <= fad.flip <= 1:
                problems.append("fading needs two non-negative gains and a flip probability in [0, 1]")
        if problems:
            raise InvalidModel(problems)
        validate_graph(CommGraph(n, edges))

    @property
    def stations(self):
        return self.channel.shape[0]

    @property
    def channel_states(self):
        return 1 if self.fading is None else 2

    def gain_scale(self, c):
        return 1.0 if self.fading is None else float(self.fading.gains[c])

    def channel_transition(self):
        if self.fading is None:
            return np.ones((1, 1))
        p = self.fading.flip
        return np.array([[1 - p, p], [p, 1 - p]])

    def graph(self):
        return CommGraph(self.stations, self.edges)


def log_grid(low, high, points):
    return tuple(float(x) for x in np.geomspace(low, high, points))


# -- per-slot arithmetic ------------------------------------------------------


def sinr(i, actions, cfg, scale=1.0):
    """``h_ii P a_i / (noise + sum_{j != i} h_ji P a_j)``; gains into user ``i`` scaled by ``scale``."""
    a = np.asarray(actions)
    if a[i] == 0:
        return 0.0
    h = cfg.channel[:, i] * scale
    interference = sum(h[j] * cfg.power * a[j] for j in range(len(a)) if j != i)
    return float(h[i] * cfg.power / (cfg.noise + interference))


def signal_and_interference(i, actions, cfg, scale=1.0):
    a = np.asarray(actions)
    h = cfg.channel[:, i] * scale
    sig = float(h[i] * cfg.power * a[i])
    intf = float(sum(h[j] * cfg.power * a[j] for j in range(len(a)) if j != i))
    return sig, intf


def shannon_rate(sinr_value, bandwidth):
    return float(bandwidth * math.log2(1.0 + sinr_value))


def snap(x, grid):
    """Nearest grid point; ties go to the lower point."""
    g = np.asarray(grid)
    k = int(np.searchsorted(g, x))
    if k == 0:
        return 0
    if k == len(g):
        return len(g) - 1
    return k - 1 if x - g[k - 1] <= g[k] - x else k


def avg_rate_update(prev, rate, averaging, grid=None):
    """``(1 - 1/B) prev + rate / B``, snapped to ``grid`` when one is given."""
    x = (1.0 - 1.0 / averaging) * prev + rate / averaging
    if grid is None:
        return x
    return float(grid[snap(x, grid)])


def pf_step_reward(prev, rate, averaging):
    """``ln((1 - 1/B)(1 + rate / ((B - 1) prev)))``."""
    if not prev > 0:
        raise DegenerateAverage(f"average rate {prev} must be positive")
    return math.log((1.0 - 1.0 / averaging) * (1.0 + rate / ((averaging - 1.0) * prev)))


@dataclass
class Trajectory:
    averages: np.ndarray  # (T + 1, N)
    rewards: np.ndarray  # (T, N)
    actions: np.ndarray = field(default=None)


def pf_utility_check(trajectory):
    """``|sum log avg^T - sum log avg^0 - sum_{t,i} r|`` for an unsnapped trajectory."""
    x = np.asarray(trajectory.averages)
    r = np.asarray(trajectory.rewards)
    if len(x) < 2:
        return 0.0
    return abs(float(np.log(x[-1]).sum() - np.log(x[0]).sum() - r.sum()))


def simulate_exact(cfg, slots, rng, initial=None, policy=None):
    """Unsnapped trajectory under random (or ``policy(t, averages)``) transmit decisions."""
    n = cfg.stations
    x = np.full(n, cfg.grid[0]) if initial is None else np.array(initial, dtype=np.float64)
    c = np.zeros(n, dtype=np.int64)
    P = cfg.channel_transition()
    avgs, rews, acts = [x.copy()], [], []
    for t in range(slots):
        a = rng.integers(0, 2, n) if policy is None else np.asarray(policy(t, x))
        c = np.array([rng.choice(cfg.channel_states, p=P[ci]) for ci in c])
        r = np.empty(n)
        nxt = np.empty(n)
        for i in range(n):
            rate = shannon_rate(sinr(i, a, cfg, cfg.gain_scale(c[i])), cfg.bandwidth)
            r[i] = pf_step_reward(x[i], rate, cfg.averaging)
            nxt[i] = avg_rate_update(x[i], rate, cfg.averaging)
        x = nxt
        avgs.append(x.copy())
        rews.append(r)
        acts.append(a)
    return Trajectory(np.array(avgs), np.array(rews).reshape(slots, n), np.array(acts).reshape(slots, n))


# -- networked model ----------------------------------------------------------


def _local_actions(cfg, i, neighbors, a_i, a_nb):
    a = np.full(cfg.stations, TRANSMIT if cfg.non_neighbor_transmit else SILENT)
    a[i] = a_i
    for j, aj in zip(neighbors, a_nb):
        a[j] = aj
    return a


def _observation_values(cfg, i, neighbors):
    """Achievable (signal, interference) pairs, mapped to observation indices."""
    sigs, intfs = set(), set()
    for c in range(cfg.channel_states):
        for a_i in (0, 1):
            for a_nb in product((0, 1), repeat=len(neighbors)):
                s, f = signal_and_interference(i, _local_actions(cfg, i, neighbors, a_i, a_nb), cfg,
                                               cfg.gain_scale(c))
                sigs.add(s)
                intfs.add(f)
    if cfg.observation_grid is not None:
        grid = tuple(cfg.observation_grid)
        return grid, grid
    return tuple(sorted(sigs)), tuple(sorted(intfs))


def station_frame(cfg, i, discount):
    """Networked frame of station ``i``: local state ``(grid point, channel state)``."""
    graph = cfg.graph()
    neighbors = graph.neighbors(i)
    G, C = len(cfg.grid), cfg.channel_states
    S = G * C
    Anb = 2 ** len(neighbors)
    sig_vals, int_vals = _observation_values(cfg, i, neighbors)
    n_obs = G * len(sig_vals) * len(int_vals)
    P = cfg.channel_transition()
    T = np.zeros((S, 2, Anb, S))
    O = np.zeros((S, 2, Anb, n_obs))
    R = np.zeros((S, 2, Anb))
    worst = 0.0
    for x, c in product(range(G), range(C)):
        s = x * C + c
        for a_i, (nb_idx, a_nb) in product((0, 1), enumerate(product((0, 1), repeat=len(neighbors)))):
            a = _local_actions(cfg, i, neighbors, a_i, a_nb)
            for c2 in range(C):
                scale = cfg.gain_scale(c2)
                rate = shannon_rate(sinr(i, a, cfg, scale), cfg.bandwidth)
                exact = avg_rate_update(cfg.grid[x], rate, cfg.averaging)
                x2 = snap(exact, cfg.grid)
                worst = max(worst, abs(math.log(cfg.grid[x2]) - math.log(exact)))
                s2 = x2 * C + c2
                T[s, a_i, nb_idx, s2] += P[c, c2]
                R[s, a_i, nb_idx] += P[c, c2] * pf_step_reward(cfg.grid[x], rate, cfg.averaging)
    for x2, c2 in product(range(G), range(C)):
        s2 = x2 * C + c2
        for a_i, (nb_idx, a_nb) in product((0, 1), enumerate(product((0, 1), repeat=len(neighbors)))):
            a = _local_actions(cfg, i, neighbors, a_i, a_nb)
            sig, intf = signal_and_interference(i, a, cfg, cfg.gain_scale(c2))
            o = (x2 * len(sig_vals) + snap(sig, sig_vals)) * len(int_vals) + snap(intf, int_vals)
            O[s2, a_i, nb_idx, o] = 1.0
    if worst > cfg.reward_error_bound:
        raise GridTooCoarse(f"station {i}: grid snapping shifts log-average by up to {worst:.6g}")
    labels = tuple(f"bs{i}:x{x}c{c}" for x, c in product(range(G), range(C)))
    obs_labels = tuple(
        f"x{x}|s{a}|i{b}" for x, a, b in product(range(G), range(len(sig_vals)), range(len(int_vals)))
    )
    return NetFrame(T, O, R, discount, (2,) * len(neighbors), ("silent", "transmit"), obs_labels,
                    StateSpace(labels), f"station{i}")


def initial_local_belief(cfg):
    b = np.zeros(len(cfg.grid) * cfg.channel_states)
    b[0] = 1.0
    return b


class SpectrumEnvironment:
    """Joint dynamics of all stations with snapped averages; state is ``(grid indices, channel states)``."""

    def __init__(self, cfg, frames):
        self.cfg = cfg
        self.frames = frames
        self.n_agents = cfg.stations
        self.graph = cfg.graph()
        self._obs_values = [_observation_values(cfg, i, self.graph.neighbors(i)) for i in range(cfg.stations)]

    def initial_state(self, rng):
        n = self.cfg.stations
        return (tuple([0] * n), tuple([0] * n))

    def step(self, state, actions, rng):
        cfg = self.cfg
        xs, cs = state
        a = np.asarray(actions)
        P = cfg.channel_transition()
        cs2 = tuple(int(rng.choice(cfg.channel_states, p=P[c])) for c in cs)
        xs2, obs, rew = [], [], []
        for i in range(cfg.stations):
            scale = cfg.gain_scale(cs2[i])
            rate = shannon_rate(sinr(i, a, cfg, scale), cfg.bandwidth)
            rew.append(pf_step_reward(cfg.grid[xs[i]], rate, cfg.averaging))
            x2 = snap(avg_rate_update(cfg.grid[xs[i]], rate, cfg.averaging), cfg.grid)
            xs2.append(x2)
            sig, intf = signal_and_interference(i, a, cfg, scale)
            sv, iv = self._obs_values[i]
            obs.append((x2 * len(sv) + snap(sig, sv)) * len(iv) + snap(intf, iv))
        return (tuple(xs2), cs2), obs, rew


def build_spectrum_model(cfg, discount=0.9, message_type="action", depth=4, model_depth=None):
    """Networked scenario with one agent per station on the backhaul graph.

    Neighbour candidates are level-0 models of each neighbour's own frame
    (its neighbours treated as transmitting uniformly at random), seeded at
    the neighbour's initial state.
    """
    if message_type not in ("action", "observation"):
        raise InvalidModel("spectrum scenarios exchange action or observation messages")
    graph = cfg.graph()
    frames = [station_frame(cfg, i, discount) for i in range(cfg.stations)]
    b0 = initial_local_belief(cfg)
    md = depth if model_depth is None else model_depth
    level0 = {}
    agents = []
    for i in range(cfg.stations):
        sets = []
        for j in graph.neighbors(i):
            if j not in level0:
                flat = level0_frame(frames[j], name=f"station{j}-level0")
                level0[j] = flat
            sets.append(build_model_set([AgentType(b0, level0[j])], md))
        space = build_interactive_space(frames[i].state_space, tuple(sets), 1)
        belief = np.kron(b0, np.eye(space.n_joint_models)[0])
        agents.append(AgentSpec(frames[i], space, belief, f"station{i}"))
    env = SpectrumEnvironment(cfg, frames)
    sim = SimulationConfig(discount=discount, message_type=message_type, expansion_depth=depth)
    return Scenario(graph, tuple(agents), env, message_type), sim
