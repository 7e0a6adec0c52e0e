"""Instance builders shared by the interactive and networked tests."""

from dataclasses import dataclass

import numpy as np

from netipomdp.ipomdp import AgentType, NetFrame, build_interactive_space, build_model_set
from netipomdp.pomdp import PomdpFrame, StateSpace

from oracles import model_successors, rand_stochastic


@dataclass
class Level1:
    frame: NetFrame
    nb_frame: PomdpFrame
    ms: object
    space: object
    belief: np.ndarray

    def oracle_args(self):
        beliefs = [m.belief for m in self.ms.models]
        succ = model_successors(beliefs, self.nb_frame.transition, self.nb_frame.observation)
        return (self.frame.transition, self.frame.observation, self.ms.action_dist, succ,
                self.nb_frame.observation)


def level1_instance(rng, S=2, A=2, Aj=2, O=2, Oj=2, K=2, gamma=0.9, model_depth=0, nb_reward=None):
    space = StateSpace(S)
    R_nb = rng.uniform(-1, 1, (S, Aj)) if nb_reward is None else nb_reward
    nb = PomdpFrame(rand_stochastic(rng, (S, Aj, S)), rand_stochastic(rng, (S, Aj, Oj)), R_nb, gamma,
                    state_space=space)
    ms = build_model_set([AgentType(rand_stochastic(rng, S), nb) for _ in range(K)], model_depth)
    frame = NetFrame(rand_stochastic(rng, (S, A, Aj, S)), rand_stochastic(rng, (S, A, Aj, O)),
                     rng.uniform(-1, 1, (S, A, Aj)), gamma, (Aj,), state_space=space)
    ispace = build_interactive_space(space, ms, 1)
    return Level1(frame, nb, ms, ispace, rand_stochastic(rng, ispace.size))
