# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for rollouts, offline Q-learning sweeps and policy evaluation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _draw(const double[:] cum, double u) nogil:
    cdef Py_ssize_t k, n = cum.shape[0]
    for k in range(n):
        if u < cum[k]:
            return k
    return n - 1


def sample_path(const double[:] cum_start, const double[:, :] cum_policy,
                const double[:, :, :] cum_trans, const double[:] uniforms, Py_ssize_t horizon):
    states_arr = np.zeros(horizon, dtype=np.int64)
    actions_arr = np.zeros(horizon, dtype=np.int64)
    cdef cnp.int64_t[:] states = states_arr
    cdef cnp.int64_t[:] actions = actions_arr
    cdef Py_ssize_t t, s, a
    with nogil:
        s = _draw(cum_start, uniforms[0])
        for t in range(horizon):
            a = _draw(cum_policy[s], uniforms[1 + 2 * t])
            states[t] = s
            actions[t] = a
            s = _draw(cum_trans[s, a], uniforms[2 + 2 * t])
    return states_arr, actions_arr


def q_sweeps(const cnp.int64_t[:] s, const cnp.int64_t[:] a, const double[:] r,
             const cnp.int64_t[:] s2, const cnp.uint8_t[:] term, double[:, :] q,
             double gamma, const double[:] lrs):
    cdef Py_ssize_t n = s.shape[0], n_act = q.shape[1]
    cdef Py_ssize_t it, i, k
    cdef double best, target, lr
    with nogil:
        for it in range(lrs.shape[0]):
            lr = lrs[it]
            for i in range(n):
                best = q[s2[i], 0]
                for k in range(1, n_act):
                    if q[s2[i], k] > best:
                        best = q[s2[i], k]
                if term[i]:
                    target = r[i]
                else:
                    target = r[i] + gamma * best
                q[s[i], a[i]] = q[s[i], a[i]] + lr * (target - q[s[i], a[i]])
    return np.asarray(q)


def greedy_returns(const double[:] cum_start, const double[:, :, :] cum_trans,
                   const double[:, :] reward, const cnp.int64_t[:] greedy,
                   const double[:, :] uniforms):
    cdef Py_ssize_t n_ep = uniforms.shape[0], width = uniforms.shape[1]
    out_arr = np.zeros(n_ep, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t e, t, s, act
    cdef double total
    with nogil:
        for e in range(n_ep):
            s = _draw(cum_start, uniforms[e, 0])
            total = 0.0
            for t in range(1, width):
                act = greedy[s]
                total += reward[s, act]
                s = _draw(cum_trans[s, act], uniforms[e, t])
            out[e] = total
    return out_arr
