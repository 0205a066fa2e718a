"""Pure-Python kernels. Same contracts and arithmetic order as ``_ckernels.pyx``."""

from bisect import bisect_right

import numpy as np


def _draw(cum, u):
    k = bisect_right(cum, u)
    return k if k < len(cum) else len(cum) - 1


def sample_path(cum_start, cum_policy, cum_trans, uniforms, horizon):
    """Roll out ``horizon`` steps by inverse-CDF sampling from pre-drawn uniforms.

    ``uniforms`` holds ``1 + 2 * horizon`` values: the start draw, then an
    (action, next state) pair of draws per step.
    """
    start = cum_start.tolist()
    pol = cum_policy.tolist()
    trans = cum_trans.tolist()
    u = uniforms.tolist()
    states = [0] * horizon
    actions = [0] * horizon
    s = _draw(start, u[0])
    for t in range(horizon):
        a = _draw(pol[s], u[1 + 2 * t])
        states[t] = s
        actions[t] = a
        s = _draw(trans[s][a], u[2 + 2 * t])
    return np.array(states, dtype=np.int64), np.array(actions, dtype=np.int64)


def q_sweeps(s, a, r, s2, term, q, gamma, lrs):
    """In-place tabular Q-learning: one ordered pass over the transitions per learning rate."""
    S = s.tolist()
    A = a.tolist()
    Rw = r.tolist()
    S2 = s2.tolist()
    T = term.tolist()
    Q = q.tolist()
    n = len(S)
    for lr in lrs.tolist():
        for i in range(n):
            row = Q[S2[i]]
            best = row[0]
            for v in row:
                if v > best:
                    best = v
            target = Rw[i] if T[i] else Rw[i] + gamma * best
            qi = Q[S[i]]
            qi[A[i]] = qi[A[i]] + lr * (target - qi[A[i]])
    q[...] = np.array(Q, dtype=np.float64)
    return q


def greedy_returns(cum_start, cum_trans, reward, greedy, uniforms):
    """Undiscounted returns of a deterministic policy; one uniforms row per episode."""
    start = cum_start.tolist()
    trans = cum_trans.tolist()
    R = reward.tolist()
    pi = greedy.tolist()
    out = []
    for row in uniforms.tolist():
        s = _draw(start, row[0])
        total = 0.0
        for t in range(1, len(row)):
            act = pi[s]
            total += R[s][act]
            s = _draw(trans[s][act], row[t])
        out.append(total)
    return np.array(out, dtype=np.float64)
