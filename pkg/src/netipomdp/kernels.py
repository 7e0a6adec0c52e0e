"""Backend selection for the hot loops.

The compiled extension is used when it imported cleanly; set
``NETIPOMDP_BACKEND=python`` to force the numpy fallback. Both backends take
C-contiguous float64 arrays (int64 for successor indices) and return fresh
arrays.
"""

from __future__ import annotations

import os

import numpy as np

from . import _reference

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _select(name):
    if name == "python" or _compiled is None:
        return "python", _reference
    return "compiled", _compiled


BACKEND, _impl = _select(os.environ.get("NETIPOMDP_BACKEND", "compiled"))


def use_backend(name):
    """Switch backends at runtime (``"compiled"`` or ``"python"``); returns the active name."""
    global BACKEND, _impl
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled kernels are not available in this build")
    BACKEND, _impl = _select(name)
    return BACKEND


def compiled_available():
    return _compiled is not None


def bellman_sweep(rewards, probs, succ, values, gamma):
    """One application of the max-over-actions backup on a tabulated graph.

    ``q[p, a] = rewards[p, a] + gamma * sum_o probs[p, a, o] * values[succ[p, a, o]]``
    with negative successors skipped. Returns ``(max_a q, q)``.
    """
    return _impl.bellman_sweep(
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(probs, dtype=np.float64),
        np.ascontiguousarray(succ, dtype=np.int64),
        np.ascontiguousarray(values, dtype=np.float64),
        float(gamma),
    )


def interactive_masses(b, w, trans, obs, g):
    return _impl.interactive_masses(
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(trans, dtype=np.float64),
        np.ascontiguousarray(obs, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
    )


def nearest_tv(points, x):
    return _impl.nearest_tv(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
    )
