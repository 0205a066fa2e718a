"""Synthetic gridworld MDPs with a known reward, rollouts and clip extraction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .core import Clip

# up, right, down, left in (dx, dy)
MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
ACTION_NAMES = ("up", "right", "down", "left")


@dataclass(frozen=True, eq=False)
class Mdp:
    transition: np.ndarray       # (S, A, S), row-stochastic
    true_reward: np.ndarray      # (S, A)
    start_distribution: np.ndarray
    gamma: float = 0.95
    width: int | None = None
    height: int | None = None
    goals: frozenset = frozenset()
    hazards: frozenset = frozenset()

    def __post_init__(self):
        S, A, S2 = self.transition.shape
        if S != S2 or S < 1 or A < 1:
            raise ValueError(f"bad transition shape {self.transition.shape}")
        if self.true_reward.shape != (S, A):
            raise ValueError("reward table shape does not match transition")
        if not np.allclose(self.transition.sum(axis=2), 1.0, atol=1e-9, rtol=0):
            raise ValueError("transition rows must sum to 1")
        if abs(self.start_distribution.sum() - 1.0) > 1e-9:
            raise ValueError("start distribution must sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def cum_transition(self) -> np.ndarray:
        return np.ascontiguousarray(np.cumsum(self.transition, axis=2))

    @cached_property
    def cum_start(self) -> np.ndarray:
        return np.ascontiguousarray(np.cumsum(self.start_distribution))

    def cell(self, state: int) -> tuple[int, int]:
        return state % self.width, state // self.width

    def state(self, x: int, y: int) -> int:
        return y * self.width + x


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    actions: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))


def build_gridworld(width: int, height: int, goal_cells: Sequence[tuple[int, int]] = (),
                    hazard_cells: Sequence[tuple[int, int]] = (), seed: int = 0, *,
                    random_hazards: int = 0, slip: float = 0.0, gamma: float = 0.95,
                    goal_mode: str = "absorb") -> Mdp:
    """Build a 4-action gridworld.

    Entering a goal cell pays +1 and goals are absorbing; entering a hazard
    cell costs -1. Bumping into a wall leaves the agent in place. With
    ``slip > 0`` the move is replaced by one of the two perpendicular moves
    with probability ``slip / 2`` each, and ``R(s, a)`` is the expected
    reward over next states. ``seed`` only matters for ``random_hazards``,
    the number of extra hazards scattered over free cells.

    ``goal_mode="reset"`` keeps the +1 for entering a goal but sends the agent
    back to the start distribution instead of absorbing it, which makes
    reaching the goal a recurring incentive.
    """
    if goal_mode not in ("absorb", "reset"):
        raise ValueError(f"unknown goal_mode {goal_mode!r}")
    if width < 1 or height < 1:
        raise ValueError("grid must have at least one cell")
    goals = {tuple(c) for c in goal_cells}
    hazards = {tuple(c) for c in hazard_cells}
    for x, y in goals | hazards:
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"cell {(x, y)} lies outside the {width}x{height} grid")
    if goals & hazards:
        raise ValueError(f"cells {sorted(goals & hazards)} are both goal and hazard")
    if random_hazards:
        rng = np.random.default_rng(seed)
        free = [(x, y) for y in range(height) for x in range(width)
                if (x, y) not in goals and (x, y) not in hazards]
        if random_hazards > len(free):
            raise ValueError("not enough free cells for the requested random hazards")
        picks = rng.choice(len(free), size=random_hazards, replace=False)
        hazards |= {free[k] for k in sorted(picks)}
    if not 0.0 <= slip < 1.0:
        raise ValueError("slip must lie in [0, 1)")

    S, A = width * height, len(MOVES)
    free_mask = np.array([(s % width, s // width) not in goals and (s % width, s // width) not in hazards
                          for s in range(S)])
    start = free_mask.astype(float) if free_mask.any() else np.ones(S)
    start /= start.sum()
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for y in range(height):
        for x in range(width):
            s = y * width + x
            if (x, y) in goals:
                P[s, :, s] = 1.0
                continue
            for a in range(A):
                if slip > 0:
                    outcomes = [(a, 1.0 - slip), ((a + 1) % 4, slip / 2), ((a + 3) % 4, slip / 2)]
                else:
                    outcomes = [(a, 1.0)]
                for move, prob in outcomes:
                    dx, dy = MOVES[move]
                    nx, ny = x + dx, y + dy
                    if not (0 <= nx < width and 0 <= ny < height):
                        nx, ny = x, y
                    s2 = ny * width + nx
                    if goal_mode == "reset" and s2 != s and (nx, ny) in goals:
                        P[s, a] += prob * start
                    else:
                        P[s, a, s2] += prob
                    if s2 != s and (nx, ny) in goals:
                        R[s, a] += prob
                    elif s2 != s and (nx, ny) in hazards:
                        R[s, a] -= prob

    return Mdp(P, R, start, gamma, width, height, frozenset(goals), frozenset(hazards))


def value_iteration(mdp: Mdp, reward: np.ndarray | None = None, tol: float = 1e-12,
                    max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q table for ``reward`` (default: the true reward)."""
    R = mdp.true_reward if reward is None else reward
    q = np.zeros_like(R, dtype=float)
    for _ in range(max_iter):
        q_new = R + mdp.gamma * mdp.transition @ q.max(axis=1)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


def greedy_policy(q: np.ndarray) -> np.ndarray:
    return np.argmax(q, axis=1)


def epsilon_greedy(q: np.ndarray, epsilon: float) -> np.ndarray:
    """Action-probability table acting greedily w.p. ``1 - epsilon``."""
    S, A = q.shape
    pi = np.full((S, A), epsilon / A)
    pi[np.arange(S), greedy_policy(q)] += 1.0 - epsilon
    return pi


def uniform_policy(mdp: Mdp) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def rollout(mdp: Mdp, policy: np.ndarray, horizon: int, seed) -> Trajectory:
    """Sample ``horizon`` (state, action) steps under a stochastic policy table."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy table shape does not match the MDP")
    rng = np.random.default_rng(seed)
    uniforms = rng.random(1 + 2 * horizon)
    states, actions = kernels.sample_path(mdp.cum_start, np.ascontiguousarray(np.cumsum(policy, axis=1)),
                                          mdp.cum_transition, uniforms, horizon)
    return Trajectory(tuple(states.tolist()), tuple(actions.tolist()))


def behaviour_policies(mdp: Mdp, epsilons: Sequence[float] = (0.1, 0.3, 0.6)) -> list[np.ndarray]:
    """Epsilon-greedy optimal policies plus a uniform-random one."""
    q = value_iteration(mdp)
    return [epsilon_greedy(q, eps) for eps in epsilons] + [uniform_policy(mdp)]


def generate_trajectories(mdp: Mdp, n_trajectories: int, horizon: int, seed: int,
                          epsilons: Sequence[float] = (0.1, 0.3, 0.6)) -> list[Trajectory]:
    """Roll out trajectories, each under a behaviour policy picked uniformly at random."""
    policies = behaviour_policies(mdp, epsilons)
    ss = np.random.SeedSequence(seed)
    pick_rng = np.random.default_rng(ss.spawn(1)[0])
    choices = pick_rng.integers(len(policies), size=n_trajectories)
    seeds = ss.spawn(n_trajectories)
    return [rollout(mdp, policies[c], horizon, sd) for c, sd in zip(choices, seeds)]


def clip_trajectories(trajectories: Sequence[Trajectory], t_c: int, start_id: int = 0) -> list[Clip]:
    """Cut each trajectory into consecutive non-overlapping windows of ``t_c`` steps."""
    if t_c < 1:
        raise ValueError("t_c must be >= 1")
    clips = []
    next_id = start_id
    for k, traj in enumerate(trajectories):
        if traj.length < t_c:
            raise ValueError(f"trajectory {k} has length {traj.length} < t_c={t_c}")
        for lo in range(0, traj.length - t_c + 1, t_c):
            clips.append(Clip(next_id, tuple(traj.states[lo:lo + t_c]), tuple(traj.actions[lo:lo + t_c])))
            next_id += 1
    return clips


def true_clip_score(clip: Clip, mdp: Mdp) -> float:
    """Mean true reward over the clip's (state, action) pairs."""
    return float(np.mean(mdp.true_reward[list(clip.states), list(clip.actions)]))


def _parse_cells(text: str) -> list[tuple[int, int]]:
    cells = []
    for chunk in text.replace(";", " ").split():
        x, y = chunk.split(",")
        cells.append((int(x), int(y)))
    return cells


def gridworld_from_section(section: Mapping[str, str]) -> Mdp:
    """Build from a config section with keys width, height, goals, hazards, seed.

    Cells are written ``x,y`` and separated by ``;`` or whitespace.
    """
    return build_gridworld(
        int(section["width"]), int(section["height"]),
        _parse_cells(section.get("goals", "")), _parse_cells(section.get("hazards", "")),
        int(section.get("seed", 0)),
        random_hazards=int(section.get("random_hazards", 0)),
        slip=float(section.get("slip", 0.0)),
        gamma=float(section.get("gamma", 0.95)),
        goal_mode=section.get("goal_mode", "absorb"),
    )
