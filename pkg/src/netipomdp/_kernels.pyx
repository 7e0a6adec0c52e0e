# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: Bellman sweeps over tabulated belief graphs and the
interactive belief-update contraction. Mirrors ``_reference`` exactly in
semantics; summation order follows the loop nesting below."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def bellman_sweep(const double[:, ::1] rewards,
                  const double[:, :, ::1] probs,
                  const cnp.int64_t[:, :, ::1] succ,
                  const double[::1] values,
                  double gamma):
    cdef Py_ssize_t P = rewards.shape[0]
    cdef Py_ssize_t A = rewards.shape[1]
    cdef Py_ssize_t O = probs.shape[2]
    cdef Py_ssize_t p, a, o
    cdef cnp.int64_t j
    cdef double acc, best
    q_arr = np.empty((P, A), dtype=np.float64)
    out_arr = np.empty(P, dtype=np.float64)
    cdef double[:, ::1] q = q_arr
    cdef double[::1] out = out_arr
    with nogil:
        for p in range(P):
            for a in range(A):
                acc = 0.0
                for o in range(O):
                    j = succ[p, a, o]
                    if j >= 0:
                        acc = acc + probs[p, a, o] * values[j]
                q[p, a] = rewards[p, a] + gamma * acc
            best = q[p, 0]
            for a in range(1, A):
                if q[p, a] > best:
                    best = q[p, a]
            out[p] = best
    return out_arr, q_arr


def interactive_masses(const double[:, ::1] b,
                       const double[:, ::1] w,
                       const double[:, :, ::1] trans,
                       const double[:, :, ::1] obs,
                       const double[:, :, :, ::1] g):
    """masses[o, s', k'] = sum_{s,k,a} b[s,k] w[k,a] T[s,a,s'] O[s',a,o] G[k,a,s',k']."""
    cdef Py_ssize_t S = b.shape[0]
    cdef Py_ssize_t K = b.shape[1]
    cdef Py_ssize_t A = w.shape[1]
    cdef Py_ssize_t S2 = trans.shape[2]
    cdef Py_ssize_t NO = obs.shape[2]
    cdef Py_ssize_t K2 = g.shape[3]
    cdef Py_ssize_t s, k, a, t, kk, o
    cdef double pred, wk, h
    pred_arr = np.zeros((K, A, S2), dtype=np.float64)
    hid_arr = np.zeros((S2, A, K2), dtype=np.float64)
    out_arr = np.zeros((NO, S2, K2), dtype=np.float64)
    cdef double[:, :, ::1] pr = pred_arr
    cdef double[:, :, ::1] hid = hid_arr
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for k in range(K):
            for a in range(A):
                wk = w[k, a]
                if wk == 0.0:
                    continue
                for t in range(S2):
                    pred = 0.0
                    for s in range(S):
                        pred = pred + b[s, k] * trans[s, a, t]
                    pr[k, a, t] = pred * wk
        for t in range(S2):
            for a in range(A):
                for k in range(K):
                    pred = pr[k, a, t]
                    if pred == 0.0:
                        continue
                    for kk in range(K2):
                        hid[t, a, kk] = hid[t, a, kk] + pred * g[k, a, t, kk]
        for o in range(NO):
            for t in range(S2):
                for a in range(A):
                    h = obs[t, a, o]
                    if h == 0.0:
                        continue
                    for kk in range(K2):
                        out[o, t, kk] = out[o, t, kk] + h * hid[t, a, kk]
    return out_arr


def nearest_tv(const double[:, ::1] points, const double[::1] x):
    """Index and total-variation distance of the closest row; ties go to the lowest index."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, diff, best = -1.0
    cdef Py_ssize_t best_i = -1
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = points[i, j] - x[j]
                if diff < 0:
                    diff = -diff
                acc = acc + diff
            if best_i < 0 or acc < best:
                best = acc
                best_i = i
    return best_i, 0.5 * best
