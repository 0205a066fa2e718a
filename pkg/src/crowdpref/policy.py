"""Downstream evaluation: relabel clips with a reward, learn a policy offline, roll it out."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .core import Clip
from .envgen import Mdp
from .nnet import RewardNet


@dataclass
class TransitionSet:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def __post_init__(self):
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("transition rewards must be finite")


def _reward_table(reward: RewardNet | np.ndarray) -> np.ndarray:
    return reward.reward_table() if isinstance(reward, RewardNet) else np.asarray(reward, dtype=float)


def relabel(clips: Sequence[Clip], reward: RewardNet | np.ndarray,
            terminal_states: Sequence[int] = ()) -> TransitionSet:
    """Turn each clip into ``length - 1`` transitions rewarded by ``reward``.

    ``reward`` is a network or an (S, A) table. The last step of a clip emits
    nothing, so no transition crosses a clip boundary.
    """
    table = _reward_table(reward)
    s, a, s2 = [], [], []
    for clip in clips:
        s.extend(clip.states[:-1])
        a.extend(clip.actions[:-1])
        s2.extend(clip.states[1:])
    s = np.array(s, dtype=np.int64)
    a = np.array(a, dtype=np.int64)
    s2 = np.array(s2, dtype=np.int64)
    term = np.isin(s2, np.asarray(list(terminal_states), dtype=np.int64)).astype(np.uint8)
    return TransitionSet(s, a, table[s, a] if len(s) else np.zeros(0), s2, term)


def constant_lr(lr: float) -> Callable[[int], float]:
    return lambda k: lr


def decaying_lr(lr0: float = 1.0, power: float = 0.6) -> Callable[[int], float]:
    return lambda k: lr0 / (1.0 + k) ** power


def offline_q_learning(transitions: TransitionSet, n_states: int, n_actions: int, gamma: float,
                       iterations: int, lr_schedule: Callable[[int], float] | float = 0.5,
                       q0: np.ndarray | None = None) -> np.ndarray:
    """Tabular Q-learning: ``iterations`` ordered sweeps over a fixed transition set.

    ``lr_schedule`` maps the sweep index to a step size (a float means constant).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    schedule = constant_lr(lr_schedule) if isinstance(lr_schedule, (int, float)) else lr_schedule
    lrs = np.array([schedule(k) for k in range(iterations)], dtype=np.float64)
    q = np.zeros((n_states, n_actions)) if q0 is None else np.array(q0, dtype=np.float64)
    return kernels.q_sweeps(transitions.states, transitions.actions, transitions.rewards.astype(np.float64),
                            transitions.next_states, transitions.terminal.astype(np.uint8), q, float(gamma), lrs)


def evaluate_policy(mdp: Mdp, q: np.ndarray, episodes: int, horizon: int, seed: int) -> float:
    """Mean undiscounted true return of the greedy policy over ``episodes`` rollouts."""
    rng = np.random.default_rng(seed)
    uniforms = rng.random((episodes, 1 + horizon))
    greedy = np.argmax(q, axis=1).astype(np.int64)
    returns = kernels.greedy_returns(mdp.cum_start, mdp.cum_transition, np.ascontiguousarray(mdp.true_reward),
                                     greedy, uniforms)
    return float(returns.mean())


def reward_alignment(reward: RewardNet | np.ndarray, mdp: Mdp) -> tuple[float, float]:
    """Pearson and Spearman correlation of a learned reward with the true one over all (s, a).

    A constant learned reward has no defined correlation; both values are NaN then.
    """
    learned = _reward_table(reward).ravel()
    true = mdp.true_reward.ravel()
    if np.ptp(learned) == 0 or np.ptp(true) == 0:
        return math.nan, math.nan
    return float(stats.pearsonr(learned, true)[0]), float(stats.spearmanr(learned, true)[0])
