"""Small numpy networks with hand-written backprop.

``RewardNet`` scores one (state, action) pair; ``ReliabilityNet`` turns an
annotator embedding, co-label group means and a BT probability into a label
reliability in (0, 1). Everything runs in float64.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

Params = dict[str, np.ndarray]


def _uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class RewardNet:
    """MLP on one-hot(state) ++ one-hot(action) with tanh hidden layers and a scalar output."""

    def __init__(self, n_states: int, n_actions: int, hidden: Sequence[int] = (64, 64),
                 rng: np.random.Generator | None = None, zero: bool = False):
        self.n_states = n_states
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = (n_states + n_actions, *self.hidden, 1)
        self.params: Params = {}
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = np.zeros((fan_in, fan_out)) if zero else _uniform_init(rng, fan_in, (fan_in, fan_out))
            self.params[f"W{k}"] = w
            self.params[f"b{k}"] = np.zeros(fan_out)
        self.n_layers = len(sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.n_states + self.n_actions

    def encode(self, states, actions) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        if states.min(initial=0) < 0 or states.max(initial=0) >= self.n_states:
            raise ValueError("state index out of range for this network")
        if actions.min(initial=0) < 0 or actions.max(initial=0) >= self.n_actions:
            raise ValueError("action index out of range for this network")
        x = np.zeros((len(states), self.input_dim))
        rows = np.arange(len(states))
        x[rows, states] = 1.0
        x[rows, self.n_states + actions] = 1.0
        return x

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected input of shape (n, {self.input_dim}), got {x.shape}")
        acts = [x]
        h = x
        for k in range(self.n_layers):
            z = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            h = np.tanh(z) if k < self.n_layers - 1 else z
            acts.append(h)
        return h[:, 0], acts

    def backward(self, acts: list, dout: np.ndarray) -> Params:
        grads: Params = {}
        delta = dout[:, None]
        for k in reversed(range(self.n_layers)):
            grads[f"W{k}"] = acts[k].T @ delta
            grads[f"b{k}"] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.params[f"W{k}"].T) * (1.0 - acts[k] ** 2)
        return grads

    def __call__(self, states, actions) -> np.ndarray:
        return self.forward(self.encode(states, actions))[0]

    def reward_table(self) -> np.ndarray:
        s, a = np.meshgrid(np.arange(self.n_states), np.arange(self.n_actions), indexing="ij")
        return self(s.ravel(), a.ravel()).reshape(self.n_states, self.n_actions)


def reward_forward(net: RewardNet, state: int, action: int) -> float:
    return float(net(state, action)[0])


class ReliabilityNet:
    """Worker embeddings plus one logistic unit over [e_w, mean_succ, mean_approx, mean_prec, p_bt]."""

    def __init__(self, n_annotators: int, dim: int = 8, rng: np.random.Generator | None = None,
                 zero: bool = False):
        if n_annotators < 1 or dim < 1:
            raise ValueError("need at least one annotator and a positive embedding size")
        self.n_annotators = n_annotators
        self.dim = dim
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = 4 * dim + 1
        self.params: Params = {
            "embeddings": np.zeros((n_annotators, dim)) if zero else 0.1 * rng.standard_normal((n_annotators, dim)),
            "head_w": np.zeros(fan_in) if zero else _uniform_init(rng, fan_in, fan_in),
            "head_b": np.zeros(1),
        }

    def features(self, annotators: np.ndarray, group_avg: Sequence[sp.spmatrix] | None,
                 p_bt: np.ndarray | None) -> np.ndarray:
        """Head input rows; ``group_avg[g]`` averages embeddings of label group ``g``."""
        annotators = np.asarray(annotators, dtype=np.int64)
        if annotators.size and (annotators.min() < 0 or annotators.max() >= self.n_annotators):
            raise IndexError("annotator id outside the embedding table")
        E = self.params["embeddings"]
        B, d = len(annotators), self.dim
        x = np.zeros((B, 4 * d + 1))
        x[:, :d] = E[annotators]
        if group_avg is not None:
            for g, mat in enumerate(group_avg):
                x[:, d * (g + 1):d * (g + 2)] = mat @ E
        if p_bt is not None:
            x[:, -1] = p_bt
        return x

    def forward(self, annotators, group_avg=None, p_bt=None) -> tuple[np.ndarray, tuple]:
        x = self.features(annotators, group_avg, p_bt)
        alpha = expit(x @ self.params["head_w"] + self.params["head_b"][0])
        return alpha, (np.asarray(annotators, dtype=np.int64), group_avg, p_bt is not None, x, alpha)

    def backward(self, cache: tuple, dalpha: np.ndarray) -> tuple[Params, np.ndarray]:
        """Gradients for the parameters and for the ``p_bt`` input."""
        annotators, group_avg, has_p, x, alpha = cache
        d = self.dim
        dz = dalpha * alpha * (1.0 - alpha)
        w = self.params["head_w"]
        dx = dz[:, None] * w[None, :]
        dE = np.zeros_like(self.params["embeddings"])
        np.add.at(dE, annotators, dx[:, :d])
        if group_avg is not None:
            for g, mat in enumerate(group_avg):
                dE += mat.T @ dx[:, d * (g + 1):d * (g + 2)]
        grads = {"embeddings": dE, "head_w": x.T @ dz, "head_b": np.array([dz.sum()])}
        dp = dx[:, -1] if has_p else np.zeros(len(dz))
        return grads, dp


def reliability_forward(net: ReliabilityNet, w: int, group_means: Sequence[np.ndarray], p_bt: float) -> float:
    """Reliability of one label given its annotator, the three co-label group means and P_BT."""
    if not 0 <= w < net.n_annotators:
        raise IndexError(f"annotator {w} outside the embedding table")
    x = np.concatenate([net.params["embeddings"][w], *[np.asarray(m, dtype=float) for m in group_means], [p_bt]])
    return float(expit(x @ net.params["head_w"] + net.params["head_b"][0]))


# --------------------------------------------------------------------------
# Flat parameter vectors, optimisation and checkpoints

def flatten(params: Params, names: Sequence[str] | None = None) -> np.ndarray:
    names = list(params) if names is None else names
    return np.concatenate([params[n].ravel() for n in names]) if names else np.zeros(0)


def unflatten(flat: np.ndarray, like: Params, names: Sequence[str] | None = None) -> Params:
    names = list(like) if names is None else names
    out, pos = {}, 0
    for n in names:
        size = like[n].size
        out[n] = flat[pos:pos + size].reshape(like[n].shape).copy()
        pos += size
    if pos != flat.size:
        raise ValueError("flat vector length does not match the parameter set")
    return out


class Adam:
    """Adam with bias correction; one instance per parameter group."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_checkpoint(path: str | Path, tensors: Params) -> None:
    """Write named tensors to an ``.npz`` file (exact round trip)."""
    with open(path, "wb") as fh:
        np.savez(fh, **tensors)


def load_checkpoint(path: str | Path) -> Params:
    with np.load(path) as data:
        return {k: data[k].copy() for k in data.files}


def grad_check(loss: Callable[[np.ndarray], tuple[float, np.ndarray]], params: np.ndarray,
               n_probes: int = 20, h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss`` maps a flat parameter vector to ``(value, gradient)``. Probed
    coordinates are drawn without replacement; the error at each one is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    params = np.array(params, dtype=float)
    value, analytic = loss(params)
    if not np.isfinite(value):
        raise FloatingPointError("loss is not finite at the probe point")
    rng = np.random.default_rng(seed)
    coords = rng.choice(params.size, size=min(n_probes, params.size), replace=False)
    worst = 0.0
    for k in coords:
        bumped = params.copy()
        bumped[k] = params[k] + h
        up = loss(bumped)[0]
        bumped[k] = params[k] - h
        down = loss(bumped)[0]
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"loss is not finite near coordinate {k}")
        numeric = (up - down) / (2.0 * h)
        worst = max(worst, abs(analytic[k] - numeric) / max(1.0, abs(numeric)))
    return worst
