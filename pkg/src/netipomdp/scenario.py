"""YAML scenario files.

A scenario names a domain (``tiger``, ``spectrum`` or ``tabular``), its
parameters and a ``simulation`` section::

    format_version: 1
    domain: tiger
    tiger: {levels: 1, accuracy: 0.85}
    simulation: {discount: 0.9, message_type: action, seed: 7}

Parse problems raise :class:`ScenarioError`; invariant violations raise
:class:`~netipomdp.errors.InvalidModel`.
"""

from __future__ import annotations

import numpy as np
import yaml

from .errors import InvalidModel, NetIpomdpError
from .ipomdp import AgentType, NetFrame, build_interactive_space, build_model_set, level0_frame
from .net import CommGraph, validate_graph
from .pomdp import StateSpace, stochasticity_violations
from .solver import AgentSpec, Scenario, SimulationConfig, TabularEnvironment

FORMAT_VERSION = 1

_SIM_FIELDS = {
    "discount": ("discount", float),
    "epsilon": ("convergence_epsilon", float),
    "convergence_epsilon": ("convergence_epsilon", float),
    "max_rounds": ("max_rounds", int),
    "expansion_depth": ("expansion_depth", int),
    "nesting_bound": ("nesting_bound", int),
    "message_type": ("message_type", str),
    "seed": ("rng_seed", int),
    "rng_seed": ("rng_seed", int),
    "projection_bound": ("projection_bound", float),
    "sweeps_per_round": ("sweeps_per_round", int),
    "workers": ("workers", int),
}


class ScenarioError(NetIpomdpError):
    """The scenario file cannot be read or parsed."""


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ScenarioError(f"missing section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"section {name!r} must be a mapping")
    return sec


def _convert(value, kind, name):
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(value)):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name}: expected {kind.__name__}, got {value!r}") from None


def _array(value, name):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name}: expected a numeric array") from None
    if arr.dtype == object:
        raise ScenarioError(f"{name}: ragged array")
    return arr


def read_document(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    if "format_version" not in doc:
        raise ScenarioError("missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format_version {doc['format_version']!r}")
    if doc.get("domain") not in ("tiger", "spectrum", "tabular"):
        raise ScenarioError(f"domain must be tiger, spectrum or tabular, got {doc.get('domain')!r}")
    return doc


def simulation_config(doc, overrides=None):
    """``SimulationConfig`` from the ``simulation`` section, then non-``None`` overrides."""
    sec = _section(doc, "simulation", required=False)
    kwargs = {}
    for key, value in sec.items():
        if key not in _SIM_FIELDS:
            raise ScenarioError(f"unknown simulation field {key!r}")
        attr, kind = _SIM_FIELDS[key]
        kwargs[attr] = _convert(value, kind, f"simulation.{key}")
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[_SIM_FIELDS[key][0]] = value
    return SimulationConfig(**kwargs)


def _tiger(doc, cfg):
    from .domains.tiger import build_tiger_model

    sec = _section(doc, "tiger", required=False)
    known = {"levels", "accuracy", "model_depth", "seed_beliefs"}
    extra = set(sec) - known
    if extra:
        raise ScenarioError(f"unknown tiger fields {sorted(extra)}")
    seeds = sec.get("seed_beliefs")
    scenario, _ = build_tiger_model(
        levels=_convert(sec.get("levels", 1), int, "tiger.levels"),
        message_type=cfg.message_type,
        discount=cfg.discount,
        accuracy=_convert(sec.get("accuracy", 0.85), float, "tiger.accuracy"),
        depth=cfg.expansion_depth,
        model_depth=None if sec.get("model_depth") is None else _convert(sec["model_depth"], int, "tiger.model_depth"),
        nesting_bound=cfg.nesting_bound,
        seed_beliefs=None if seeds is None else [_array(b, "tiger.seed_beliefs") for b in seeds],
    )
    return scenario


def spectrum_config(sec):
    from .domains.spectrum import Fading, SpectrumConfig, log_grid

    if "channel" not in sec:
        raise ScenarioError("spectrum.channel is required")
    kwargs = {"channel": _array(sec["channel"], "spectrum.channel")}
    for key in ("bandwidth", "power", "noise", "averaging", "reward_error_bound"):
        if key in sec:
            kwargs[key] = _convert(sec[key], float, f"spectrum.{key}")
    if "grid" in sec and "grid_log" in sec:
        raise ScenarioError("give either spectrum.grid or spectrum.grid_log")
    if "grid" in sec:
        kwargs["grid"] = tuple(_array(sec["grid"], "spectrum.grid").ravel())
    elif "grid_log" in sec:
        g = sec["grid_log"]
        if not isinstance(g, dict) or set(g) != {"low", "high", "points"}:
            raise ScenarioError("spectrum.grid_log needs low, high and points")
        kwargs["grid"] = log_grid(_convert(g["low"], float, "grid_log.low"),
                                  _convert(g["high"], float, "grid_log.high"),
                                  _convert(g["points"], int, "grid_log.points"))
    if "backhaul" in sec:
        edges = sec["backhaul"]
        if not isinstance(edges, list) or any(not isinstance(e, list) or len(e) != 2 for e in edges):
            raise ScenarioError("spectrum.backhaul must be a list of [i, j] pairs")
        kwargs["edges"] = tuple((_convert(i, int, "backhaul"), _convert(j, int, "backhaul")) for i, j in edges)
    if "fading" in sec:
        f = sec["fading"]
        if not isinstance(f, dict) or "gains" not in f:
            raise ScenarioError("spectrum.fading needs gains and flip")
        kwargs["fading"] = Fading(tuple(_array(f["gains"], "fading.gains").ravel()),
                                  _convert(f.get("flip", 0.0), float, "fading.flip"))
    if "non_neighbor_transmit" in sec:
        kwargs["non_neighbor_transmit"] = bool(sec["non_neighbor_transmit"])
    if "observation_grid" in sec:
        kwargs["observation_grid"] = tuple(_array(sec["observation_grid"], "spectrum.observation_grid").ravel())
    extra = set(sec) - {"channel", "bandwidth", "power", "noise", "averaging", "reward_error_bound", "grid",
                        "grid_log", "backhaul", "fading", "non_neighbor_transmit", "observation_grid",
                        "model_depth"}
    if extra:
        raise ScenarioError(f"unknown spectrum fields {sorted(extra)}")
    return SpectrumConfig(**kwargs)


def _spectrum(doc, cfg):
    from .domains.spectrum import build_spectrum_model

    sec = _section(doc, "spectrum")
    md = sec.get("model_depth")
    scenario, _ = build_spectrum_model(
        spectrum_config(sec), cfg.discount, cfg.message_type, cfg.expansion_depth,
        None if md is None else _convert(md, int, "spectrum.model_depth"),
    )
    return scenario


def _tabular(doc, cfg):
    sec = _section(doc, "tabular")
    agents = sec.get("agents")
    if not isinstance(agents, list) or not 1 <= len(agents) <= 2:
        raise ScenarioError("tabular.agents must list one or two agents")
    n = len(agents)
    graph_sec = _section(doc, "graph", required=False)
    edges = graph_sec.get("edges", [[0, 1]] if n == 2 else [])
    graph = CommGraph(_convert(graph_sec.get("nodes", n), int, "graph.nodes"),
                      tuple(tuple(e) for e in edges))
    validate_graph(graph)
    if graph.node_count != n:
        raise InvalidModel(f"graph has {graph.node_count} nodes but {n} agents are listed")
    raw = []
    for i, a in enumerate(agents):
        if not isinstance(a, dict):
            raise ScenarioError(f"tabular.agents[{i}] must be a mapping")
        for key in ("transition", "observation", "reward"):
            if key not in a:
                raise ScenarioError(f"tabular.agents[{i}].{key} is required")
        raw.append({k: _array(a[k], f"agents[{i}].{k}") for k in ("transition", "observation", "reward")})
    S = raw[0]["transition"].shape[0]
    space = StateSpace(sec.get("states", S))
    problems = []
    frames = []
    for i, r in enumerate(raw):
        T, O, R = r["transition"], r["observation"], r["reward"]
        if n == 1:
            if T.ndim != 3 or O.ndim != 3 or R.ndim != 2:
                raise InvalidModel(f"agent {i}: expected T[s,a,s'], O[s',a,o], R[s,a]")
            T, O, R = T[:, :, None, :], O[:, :, None, :], R[:, :, None]
            nb = ()
        else:
            if T.ndim != 4 or O.ndim != 4 or R.ndim != 3:
                raise InvalidModel(f"agent {i}: expected T[s,a_i,a_j,s'], O[s',a_i,a_j,o], R[s,a_i,a_j]")
            nb = (T.shape[2],)
        try:
            frames.append(NetFrame(T, O, R, cfg.discount, nb, state_space=space, name=f"agent{i}"))
        except InvalidModel as exc:
            problems += [f"agent {i}: {v}" for v in exc.violations]
    if problems:
        raise InvalidModel(problems)
    if n == 2:
        if not np.allclose(frames[0].transition, frames[1].transition.transpose(0, 2, 1, 3), atol=1e-12):
            raise InvalidModel("agent transitions disagree on the shared physical dynamics")
        env = TabularEnvironment(frames[0].transition,
                                 [frames[0].observation, frames[1].observation.transpose(0, 2, 1, 3)],
                                 [frames[0].reward, frames[1].reward.transpose(0, 2, 1)],
                                 _initial(sec, S))
    else:
        env = TabularEnvironment(frames[0].transition[:, :, 0, :], [frames[0].observation[:, :, 0, :]],
                                 [frames[0].reward[:, :, 0]], _initial(sec, S))
    specs = []
    for i, a in enumerate(agents):
        sets = []
        for j in graph.neighbors(i):
            flat = level0_frame(frames[j], name=f"agent{j}-level0")
            seeds = a.get("model_beliefs", [[1.0 / S] * S])
            sets.append(build_model_set([AgentType(_array(b, f"agents[{i}].model_beliefs"), flat) for b in seeds],
                                        cfg.expansion_depth, max_level=cfg.nesting_bound))
        ispace = build_interactive_space(space, tuple(sets), 1)
        if "belief" in a:
            belief = _array(a["belief"], f"agents[{i}].belief")
        else:
            belief = np.full(ispace.size, 1.0 / ispace.size)
        specs.append(AgentSpec(frames[i], ispace, belief, f"agent{i}"))
    return Scenario(graph, tuple(specs), env, cfg.message_type)


def _initial(sec, S):
    init = _array(sec.get("initial_state", [1.0 / S] * S), "tabular.initial_state")
    problems = stochasticity_violations("initial_state", init, ())
    if problems:
        raise InvalidModel(problems)
    return init


_BUILDERS = {"tiger": _tiger, "spectrum": _spectrum, "tabular": _tabular}


def load_scenario(path, overrides=None):
    """Parse, build and validate a scenario file; returns ``(scenario, config)``."""
    doc = read_document(path)
    cfg = simulation_config(doc, overrides)
    scenario = _BUILDERS[doc["domain"]](doc, cfg)
    scenario.validate()
    return scenario, cfg

