"""Randomized checks of the backup operator: monotonicity, contraction and
uniqueness of the fixed point, plus the fairness telescoping identity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ipomdp import AgentType, NetFrame, build_interactive_space, build_model_set
from .net import Message, MessageKind, NetProblem, net_backup
from .pomdp import PomdpFrame, StateSpace
from .solver import fixed_point_iterate
from .tabulation import BeliefGraph, sup_norm

SLACK = 1e-9
KINDS = (None, MessageKind.ACTION, MessageKind.BELIEF, MessageKind.OBSERVATION)


def _stochastic(rng, shape):
    x = rng.gamma(1.0, size=shape) + 1e-3
    return x / x.sum(axis=-1, keepdims=True)


@dataclass
class Instance:
    frame: NetFrame
    space: object
    belief: np.ndarray
    kind: object
    ctx: tuple

    def problem(self):
        return NetProblem(self.frame, self.space, self.kind)

    def describe(self):
        f = self.frame
        return {
            "kind": None if self.kind is None else self.kind.value,
            "message_key": list(self.ctx),
            "discount": f.discount,
            "transition": f.transition.tolist(),
            "observation": f.observation.tolist(),
            "reward": f.reward.tolist(),
            "belief": self.belief.tolist(),
            "models": [m.belief.tolist() for m in self.space.models[0].models],
        }


def random_instance(rng, n_states=2, n_actions=2, n_neighbor_actions=2, n_observations=2,
                    n_models=2, discount=None, kind="random", model_depth=0):
    """Level-1 agent with one neighbour described by ``n_models`` random level-0 candidates."""
    space = StateSpace(n_states)
    gamma = float(rng.uniform(0.5, 0.95)) if discount is None else discount
    nb = PomdpFrame(
        _stochastic(rng, (n_states, n_neighbor_actions, n_states)),
        _stochastic(rng, (n_states, n_neighbor_actions, n_observations)),
        rng.uniform(-1, 1, (n_states, n_neighbor_actions)),
        gamma,
        state_space=space,
    )
    seeds = [AgentType(_stochastic(rng, n_states), nb) for _ in range(n_models)]
    ms = build_model_set(seeds, model_depth)
    frame = NetFrame(
        _stochastic(rng, (n_states, n_actions, n_neighbor_actions, n_states)),
        _stochastic(rng, (n_states, n_actions, n_neighbor_actions, n_observations)),
        rng.uniform(-1, 1, (n_states, n_actions, n_neighbor_actions)),
        gamma,
        (n_neighbor_actions,),
        state_space=space,
    )
    ispace = build_interactive_space(space, ms, 1)
    if kind == "random":
        kind = KINDS[int(rng.integers(len(KINDS)))]
    kind = None if kind is None else MessageKind(kind)
    if kind is MessageKind.ACTION:
        ctx = (int(rng.integers(n_neighbor_actions)),)
    elif kind is MessageKind.OBSERVATION:
        ctx = (int(rng.integers(n_observations)),)
    elif kind is MessageKind.BELIEF:
        ctx = (int(rng.integers(len(ms))),)
    else:
        ctx = ()
    return Instance(frame, ispace, _stochastic(rng, ispace.size), kind, ctx)


def messages_for(instance):
    """Messages whose key is ``instance.ctx``."""
    if instance.kind is None:
        return ()
    (c,) = instance.ctx
    ms = instance.space.models[0]
    payload = tuple(ms.models[c].physical_marginal()) if instance.kind is MessageKind.BELIEF else c
    return (Message(1, 0, instance.kind, payload),)


def domain_of(instance, depth=2):
    """Closure graph of the instance and its interior ``(type, messages)`` points.

    Interior points have every successor tabulated exactly, so the backup can
    be evaluated on them without interpolation.
    """
    graph = BeliefGraph(instance.problem(), depth=depth)
    graph.grow([(instance.belief, instance.ctx)])
    msgs = messages_for(instance)
    points = [
        (AgentType(graph.points[i], instance.frame, 1, instance.space), msgs)
        for i in range(len(graph))
        if graph.depths[i] < depth
    ]
    return graph, points


@dataclass
class Report:
    name: str
    trials: int = 0
    violations: int = 0
    counterexamples: list = field(default_factory=list)
    max_ratio: float = 0.0

    @property
    def ok(self):
        return self.violations == 0

    def line(self):
        extra = f", max ratio {self.max_ratio:.6f}" if self.name == "contraction" else ""
        return f"{self.name}: {self.trials} trials, {self.violations} violations{extra}"


def _pair_tables(graph, rng, monotone):
    V = rng.normal(0, 5, len(graph))
    if monotone:
        if rng.random() < 0.1:
            U = V.copy()
        else:
            U = V + np.abs(rng.normal(0, 2, len(graph))) * (rng.random(len(graph)) < 0.7)
    else:
        U = V + rng.normal(0, rng.uniform(0.01, 3), len(graph))
    return graph.table(V), graph.table(U)


def check_monotonicity(trials, rng, depth=2):
    """``V <= U`` pointwise implies ``HV <= HU`` pointwise (plus slack)."""
    rep = Report("monotonicity")
    for t in range(trials):
        inst = random_instance(rng)
        graph, points = domain_of(inst, depth)
        V, U = _pair_tables(graph, rng, monotone=True)
        HV, HU = net_backup(V, points), net_backup(U, points)
        for key in HV.keys:
            if HV[key] > HU[key] + SLACK:
                rep.violations += 1
                rep.counterexamples.append({"trial": t, "instance": inst.describe(), "V": V.values.tolist(),
                                            "U": U.values.tolist(), "HV": HV[key], "HU": HU[key]})
                break
        rep.trials += 1
    return rep


def check_contraction(trials, rng, discount=0.9, depth=2):
    """``||HV - HU|| <= gamma ||V - U||`` (plus slack); records the largest observed ratio."""
    rep = Report("contraction")
    for t in range(trials):
        inst = random_instance(rng, discount=discount)
        graph, points = domain_of(inst, depth)
        V, U = _pair_tables(graph, rng, monotone=False)
        d_in = sup_norm(V, U)
        d_out = sup_norm(net_backup(V, points), net_backup(U, points))
        if d_in > 0:
            rep.max_ratio = max(rep.max_ratio, d_out / d_in)
        if d_out > discount * d_in + SLACK:
            rep.violations += 1
            rep.counterexamples.append({"trial": t, "instance": inst.describe(), "V": V.values.tolist(),
                                        "U": U.values.tolist(), "input": d_in, "output": d_out})
        rep.trials += 1
    return rep


def check_fixed_point(trials, rng, discount=0.9, epsilon=1e-6, depth=3):
    """Two random starts reach fixed points within ``2 epsilon / (1 - gamma)``; deltas shrink by ``gamma``."""
    rep = Report("fixed point")
    bound = 2 * epsilon / (1 - discount)
    for t in range(trials):
        inst = random_instance(rng, discount=discount)
        graph = BeliefGraph(inst.problem(), depth=depth)
        graph.grow([(inst.belief, inst.ctx)])
        finals = []
        bad = None
        for _ in range(2):
            U0 = graph.table(rng.normal(0, 10, len(graph)))
            U, _, deltas = fixed_point_iterate(U0, graph, epsilon)
            finals.append(U)
            for a, b in zip(deltas, deltas[1:]):
                if b > discount * a + SLACK:
                    bad = {"deltas": deltas}
        gap = sup_norm(*finals)
        if gap > bound:
            bad = {"gap": gap, "bound": bound}
        if bad is not None:
            rep.violations += 1
            rep.counterexamples.append({"trial": t, "instance": inst.describe(), **bad})
        rep.trials += 1
    return rep


def check_telescoping(trials, rng, slots=100, stations=3, tolerance=1e-6):
    """Fairness identity on unsnapped random trajectories."""
    from .domains.spectrum import SpectrumConfig, pf_utility_check, simulate_exact

    rep = Report("fairness telescoping")
    for t in range(trials):
        cfg = SpectrumConfig(
            channel=rng.uniform(0.05, 1.0, (stations, stations)),
            noise=float(rng.uniform(0.01, 0.5)),
            averaging=float(rng.uniform(1.5, 50)),
            grid=tuple(np.sort(rng.uniform(0.1, 3.0, 3)) + np.arange(3) * 1e-3),
        )
        init = rng.uniform(0.1, 3.0, stations)
        res = pf_utility_check(simulate_exact(cfg, slots, rng, initial=init))
        if res > tolerance:
            rep.violations += 1
            rep.counterexamples.append({"trial": t, "residual": res})
        rep.trials += 1
    return rep
