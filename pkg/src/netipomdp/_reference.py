"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np


def bellman_sweep(rewards, probs, succ, values, gamma):
    values = np.asarray(values, dtype=np.float64)
    safe = np.where(succ >= 0, succ, 0)
    cont = np.where(succ >= 0, probs * values[safe], 0.0).sum(axis=2)
    q = rewards + gamma * cont
    return q.max(axis=1), q


def interactive_masses(b, w, trans, obs, g):
    """masses[o, s', k'] = sum_{s,k,a} b[s,k] w[k,a] T[s,a,s'] O[s',a,o] G[k,a,s',k']."""
    pred = np.einsum("sk,sat->kat", b, trans) * w[:, :, None]
    hid = np.einsum("kat,katm->tam", pred, g)
    return np.einsum("tao,tam->otm", obs, hid)


def nearest_tv(points, x):
    dist = np.abs(points - x).sum(axis=1)
    i = int(np.argmin(dist))
    return i, 0.5 * float(dist[i])
