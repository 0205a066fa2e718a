"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Inputs mirror the gridworld experiment: 7x7 grid, 2000 clips of 30 steps,
60 Q-learning sweeps and 200 evaluation episodes of 100 steps.
"""

import argparse
import timeit

import numpy as np

from crowdpref.envgen import build_gridworld, clip_trajectories, generate_trajectories, uniform_policy
from crowdpref.kernels import _pykernels
from crowdpref.policy import relabel

try:
    from crowdpref.kernels import _ckernels
except ImportError:
    _ckernels = None


def workloads():
    mdp = build_gridworld(7, 7, [(6, 6)], [(3, 3), (1, 4), (4, 1), (5, 4), (2, 2)])
    rng = np.random.default_rng(0)
    cum_pi = np.ascontiguousarray(np.cumsum(uniform_policy(mdp), axis=1))
    path_u = rng.random(1 + 2 * 3000)
    tr = relabel(clip_trajectories(generate_trajectories(mdp, 2000, 30, 0), 30), mdp.true_reward)
    lrs = np.full(60, 0.5)
    greedy = rng.integers(4, size=mdp.n_states)
    eval_u = rng.random((200, 101))
    return {
        "sample_path (3000 steps)": lambda k: k.sample_path(mdp.cum_start, cum_pi, mdp.cum_transition, path_u, 3000),
        "q_sweeps (58k transitions x 60)": lambda k: k.q_sweeps(tr.states, tr.actions, tr.rewards, tr.next_states,
                                                                tr.terminal, np.zeros((49, 4)), 0.95, lrs),
        "greedy_returns (200 x 100)": lambda k: k.greedy_returns(mdp.cum_start, mdp.cum_transition,
                                                                 mdp.true_reward, greedy, eval_u),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; only the Python fallback is available")
    print(f"{'kernel':34s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in workloads().items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:34s} {t_py:11.4f} {'-':>11s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:34s} {t_py:11.4f} {t_c:11.5f} {t_py / t_c:7.0f}x")


if __name__ == "__main__":
    main()
