"""Two-agent tiger problem on a single edge.

Both agents face the same pair of doors. Listening costs 1, opening the door
hiding the tiger costs 100 and the other door pays 10; each agent's reward is
the mean of both agents' individual payoffs. Growls are informative only when
both agents listen. Any door opening resets the tiger uniformly.
"""

from __future__ import annotations

import numpy as np

from ..errors import RecursionDepthExceeded
from ..ipomdp import NetFrame, AgentType, build_interactive_space, build_model_set, level0_frame
from ..net import CommGraph
from ..pomdp import StateSpace
from ..solver import AgentSpec, Scenario, SimulationConfig, TabularEnvironment

STATES = ("tiger-left", "tiger-right")
ACTIONS = ("listen", "open-left", "open-right")
OBSERVATIONS = ("growl-left", "growl-right")
LISTEN, OPEN_LEFT, OPEN_RIGHT = range(3)

LISTEN_COST = -1.0
GOLD = 10.0
TIGER = -100.0


def single_reward():
    r = np.full((2, 3), LISTEN_COST)
    r[0, OPEN_LEFT] = r[1, OPEN_RIGHT] = TIGER
    r[0, OPEN_RIGHT] = r[1, OPEN_LEFT] = GOLD
    return r


def tiger_tensors(accuracy=0.85):
    """Joint tensors ``T[s, a_i, a_j, s']``, ``O[s', a_i, a_j, o_i]``, ``R[s, a_i, a_j]``."""
    T = np.zeros((2, 3, 3, 2))
    O = np.full((2, 3, 3, 2), 0.5)
    for ai in range(3):
        for aj in range(3):
            if ai == LISTEN and aj == LISTEN:
                T[:, ai, aj, :] = np.eye(2)
                O[:, ai, aj, :] = [[accuracy, 1 - accuracy], [1 - accuracy, accuracy]]
            else:
                T[:, ai, aj, :] = 0.5
    r = single_reward()
    R = 0.5 * (r[:, :, None] + r[:, None, :])
    return T, O, R


def tiger_frames(discount=0.9, accuracy=0.85, space=None):
    """The networked frame and the level-0 frame that assumes the other agent always listens."""
    space = space or StateSpace(STATES)
    T, O, R = tiger_tensors(accuracy)
    net = NetFrame(T, O, R, discount, (3,), ACTIONS, OBSERVATIONS, space, "tiger")
    policy = np.zeros(3)
    policy[LISTEN] = 1.0
    return net, level0_frame(net, policy, "tiger-level0")


def build_tiger_model(levels=1, message_type="action", discount=0.9, accuracy=0.85,
                      depth=4, model_depth=None, nesting_bound=2, seed_beliefs=None):
    """Two level-``levels`` agents on one edge, each modelling the other at ``levels - 1``.

    ``model_depth`` is the expansion depth of the candidate model sets
    (``depth`` for level-0 candidates, 1 for level-1 candidates by default).
    ``seed_beliefs`` lists physical beliefs for the level-0 candidates
    (uniform by default).
    """
    if not 1 <= levels <= nesting_bound:
        raise RecursionDepthExceeded(f"level {levels} outside 1..{nesting_bound}")
    space = StateSpace(STATES)
    net, flat = tiger_frames(discount, accuracy, space)
    seeds = [np.asarray(b, dtype=np.float64) for b in (seed_beliefs or [[0.5, 0.5]])]

    def candidates(level):
        if level == 0:
            d = depth if model_depth is None else model_depth
            return build_model_set([AgentType(b, flat) for b in seeds], d, max_level=nesting_bound)
        inner = candidates(level - 1)
        ispace = build_interactive_space(space, inner, level)
        b = np.full(ispace.size, 1.0 / ispace.size)
        d = 1 if model_depth is None else model_depth
        return build_model_set([AgentType(b, net, level, ispace)], d, max_level=nesting_bound)

    agents = []
    for i in range(2):
        ispace = build_interactive_space(space, candidates(levels - 1), levels)
        b = np.full(ispace.size, 1.0 / ispace.size)
        agents.append(AgentSpec(net, ispace, b, f"agent{i}"))
    env = TabularEnvironment(
        net.transition,
        [net.observation, net.observation.transpose(0, 2, 1, 3)],
        [net.reward, net.reward.transpose(0, 2, 1)],
        [0.5, 0.5],
    )
    cfg = SimulationConfig(discount=discount, message_type=message_type, expansion_depth=depth,
                           nesting_bound=nesting_bound)
    return Scenario(CommGraph(2, ((0, 1),)), tuple(agents), env, message_type), cfg
