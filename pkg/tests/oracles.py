"""Brute-force reference computations used only by the tests.

Everything here is written with explicit loops over states, actions and
observations and avoids the package's own update and backup code.
"""

import itertools
import math

import numpy as np


def rand_stochastic(rng, shape):
    x = rng.random(shape) + 0.05
    return x / x.sum(axis=-1, keepdims=True)


def bayes_posterior(b, T, O, a, o):
    S = len(b)
    post = np.zeros(S)
    for s2 in range(S):
        acc = 0.0
        for s in range(S):
            acc += b[s] * T[s][a][s2]
        post[s2] = O[s2][a][o] * acc
    total = post.sum()
    return None if total < 1e-12 else post / total


def obs_prob(b, T, O, a, o):
    S = len(b)
    return sum(b[s] * T[s][a][s2] * O[s2][a][o] for s in range(S) for s2 in range(S))


def policy_tree_value(b, T, O, R, gamma, horizon):
    """Finite-horizon expectimax value with zero terminal value."""
    if horizon == 0:
        return 0.0
    S, A, n_obs = len(b), len(R[0]), len(O[0][0])
    best = -np.inf
    for a in range(A):
        v = sum(b[s] * R[s][a] for s in range(S))
        for o in range(n_obs):
            p = obs_prob(b, T, O, a, o)
            if p < 1e-12:
                continue
            v += gamma * p * policy_tree_value(bayes_posterior(b, T, O, a, o), T, O, R, gamma, horizon - 1)
        best = max(best, v)
    return best


def policy_tree_q(b, T, O, R, gamma, horizon):
    S, A, n_obs = len(b), len(R[0]), len(O[0][0])
    q = []
    for a in range(A):
        v = sum(b[s] * R[s][a] for s in range(S))
        for o in range(n_obs):
            p = obs_prob(b, T, O, a, o)
            if p >= 1e-12:
                v += gamma * p * policy_tree_value(bayes_posterior(b, T, O, a, o), T, O, R, gamma, horizon - 1)
        q.append(v)
    return np.array(q)


def resolve_model(beliefs, post):
    """Index of the candidate equal to ``post`` (to 1e-12), else the nearest in total variation."""
    if post is None:
        return None
    dist = [0.5 * sum(abs(x - y) for x, y in zip(m, post)) for m in beliefs]
    for k, d in enumerate(dist):
        if d < 1e-11:
            return k
    return int(np.argmin(dist))


def model_successors(beliefs, frame_T, frame_O):
    """``succ[k][a][o]`` for level-0 candidates sharing one frame."""
    K = len(beliefs)
    A = len(frame_T[0])
    n_obs = len(frame_O[0][0])
    succ = [[[None] * n_obs for _ in range(A)] for _ in range(K)]
    for k, a, o in itertools.product(range(K), range(A), range(n_obs)):
        succ[k][a][o] = resolve_model(beliefs, bayes_posterior(beliefs[k], frame_T, frame_O, a, o))
    return succ


def joint_update(b, a_i, o_i, T, O, action_dist, succ, Oj, message=None):
    """Posterior over ``(s', k')`` by enumerating ``(s, k, a_j, s', o_j, k')``.

    ``T[s][a_i][a_j][s']``, ``O[s'][a_i][a_j][o_i]``, ``Oj[s'][a_j][o_j]`` (one
    level-0 neighbour). ``message`` is ``None`` or ``(kind, value)``:

    * action: the neighbour's action is ``value`` with probability one,
    * observation: only ``o_j == value`` contributes,
    * belief: successor model is ``value``; no neighbour-observation factor,
      and actions weighted by the prior model's action distribution.
    """
    S = len(T)
    K = len(action_dist)
    Aj = len(action_dist[0])
    n_oj = len(Oj[0][0])
    post = np.zeros((S, K))
    for s, k, aj, s2 in itertools.product(range(S), range(K), range(Aj), range(S)):
        prior = b[s * K + k]
        if prior == 0:
            continue
        if message is not None and message[0] == "action":
            w = 1.0 if aj == message[1] else 0.0
        else:
            w = action_dist[k][aj]
        base = prior * w * T[s][a_i][aj][s2] * O[s2][a_i][aj][o_i]
        if base == 0:
            continue
        if message is not None and message[0] == "belief":
            post[s2, message[1]] += base
            continue
        for oj in range(n_oj):
            if message is not None and message[0] == "observation" and oj != message[1]:
                continue
            k2 = succ[k][aj][oj]
            if k2 is None:
                continue
            post[s2, k2] += base * Oj[s2][aj][oj]
    total = post.sum()
    if total < 1e-12:
        return None
    return (post / total).ravel()


def connected(n, edges):
    """Union-find connectivity."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n)}) == 1


def joint_masses(b, a_i, T, O, action_dist, succ, Oj, message=None):
    """Unnormalized ``(o_i, s', k')`` masses of :func:`joint_update` for every own observation."""
    n_obs = len(O[0][0][0])
    out = []
    for o in range(n_obs):
        S, K = len(T), len(action_dist)
        post = np.zeros((S, K))
        for s, k, aj, s2 in itertools.product(range(S), range(K), range(len(action_dist[0])), range(S)):
            prior = b[s * K + k]
            if message is not None and message[0] == "action":
                w = 1.0 if aj == message[1] else 0.0
            else:
                w = action_dist[k][aj]
            base = prior * w * T[s][a_i][aj][s2] * O[s2][a_i][aj][o]
            if base == 0:
                continue
            if message is not None and message[0] == "belief":
                post[s2, message[1]] += base
                continue
            for oj in range(len(Oj[0][0])):
                if message is not None and message[0] == "observation" and oj != message[1]:
                    continue
                k2 = succ[k][aj][oj]
                if k2 is not None:
                    post[s2, k2] += base * Oj[s2][aj][oj]
        out.append(post.ravel())
    return np.array(out)


def expected_reward(b, a_i, R, weights):
    """``sum_{s,k} b(s,k) sum_{a_j} R[s][a_i][a_j] weights[k][a_j]``."""
    S, K = len(R), len(weights)
    return sum(b[s * K + k] * R[s][a_i][aj] * weights[k][aj]
               for s in range(S) for k in range(K) for aj in range(len(weights[0])))


def interactive_tree_q(b, T, O, R, gamma, action_dist, succ, Oj, horizon, message=None, reward_weights=None):
    """Finite-horizon action values of a level-1 agent with one level-0 neighbour.

    The message (if any) is held fixed along the lookahead; observation
    probabilities are normalized over the agent's own observations.
    """
    A = len(R[0])
    weights = action_dist if reward_weights is None else reward_weights
    q = np.zeros(A)
    for a in range(A):
        q[a] = expected_reward(b, a, R, weights)
        if horizon <= 1:
            continue
        m = joint_masses(b, a, T, O, action_dist, succ, Oj, message)
        lik = m.sum(axis=1)
        if lik.sum() < 1e-12 and message is not None:
            m = joint_masses(b, a, T, O, action_dist, succ, Oj, None)
            lik = m.sum(axis=1)
        total = lik.sum()
        for o in range(len(lik)):
            if lik[o] < 1e-12:
                continue
            nxt = m[o] / lik[o]
            q[a] += gamma * (lik[o] / total) * interactive_tree_q(
                nxt, T, O, R, gamma, action_dist, succ, Oj, horizon - 1, message, reward_weights).max()
    return q


def multi_update(b, a_i, o_i, T, O, neighbours, messages):
    """Joint update for several level-0 neighbours by full enumeration.

    ``neighbours[n] = (action_dist, succ, Oj)``; ``messages[n]`` is ``None`` or
    ``(kind, value)``. The joint neighbour action index is row-major over
    neighbours and the belief is flattened ``(s, k_1, ..., k_n)``.
    """
    S = len(T)
    Ks = [len(n[0]) for n in neighbours]
    As = [len(n[0][0]) for n in neighbours]
    b = np.asarray(b).reshape([S] + Ks)
    post = np.zeros([S] + Ks)
    for s in range(S):
        for ks in itertools.product(*(range(k) for k in Ks)):
            prior = b[(s,) + ks]
            if prior == 0:
                continue
            for ajs in itertools.product(*(range(a) for a in As)):
                w = prior
                for n, (k, aj) in enumerate(zip(ks, ajs)):
                    msg = messages[n]
                    if msg is not None and msg[0] == "action":
                        w *= 1.0 if aj == msg[1] else 0.0
                    else:
                        w *= neighbours[n][0][k][aj]
                if w == 0:
                    continue
                anb = int(np.ravel_multi_index(ajs, As))
                for s2 in range(S):
                    base = w * T[s][a_i][anb][s2] * O[s2][a_i][anb][o_i]
                    if base == 0:
                        continue
                    # per-neighbour successor distributions over k'
                    per = []
                    for n, (k, aj) in enumerate(zip(ks, ajs)):
                        dist_n = np.zeros(Ks[n])
                        msg = messages[n]
                        if msg is not None and msg[0] == "belief":
                            dist_n[msg[1]] = 1.0
                        else:
                            _, succ, Oj = neighbours[n]
                            for oj in range(len(Oj[0][0])):
                                if msg is not None and msg[0] == "observation" and oj != msg[1]:
                                    continue
                                k2 = succ[k][aj][oj]
                                if k2 is not None:
                                    dist_n[k2] += Oj[s2][aj][oj]
                        per.append(dist_n)
                    for k2s in itertools.product(*(range(k) for k in Ks)):
                        p = base
                        for n, k2 in enumerate(k2s):
                            p *= per[n][k2]
                        post[(s2,) + k2s] += p
    total = post.sum()
    return None if total < 1e-12 else (post / total).ravel()


def spectrum_row_oracle(cfg, i):
    """Transition rows of station ``i`` (N=2, static channel) written straight from the formulas."""
    j = 1 - i
    g = cfg.grid
    out = {}
    for x in range(len(g)):
        for a_i in (0, 1):
            for a_j in (0, 1):
                if a_i == 0:
                    q = 0.0
                else:
                    q = cfg.channel[i, i] * cfg.power / (cfg.noise + cfg.channel[j, i] * cfg.power * a_j)
                rate = cfg.bandwidth * math.log2(1 + q)
                exact = (1 - 1 / cfg.averaging) * g[x] + rate / cfg.averaging
                dist = [abs(exact - p) for p in g]
                best = min(range(len(g)), key=lambda k: (dist[k], k))
                row = np.zeros(len(g))
                row[best] = 1.0
                out[(x, a_i, a_j)] = row
    return out
