"""BT, Crowd-BT and DCBT preference models, their losses and the alternating trainer."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .core import LABELS, Clip, PreferenceDataset
from .nnet import Adam, Params, ReliabilityNet, RewardNet, load_checkpoint, save_checkpoint

PROB_FLOOR = 1e-12


class Variant(enum.Enum):
    BT = "bt"
    CROWD_BT = "crowd-bt"
    DCBT_NO_COLLAB = "dcbt-no-collab"
    DCBT = "dcbt"

    @property
    def uses_reliability(self) -> bool:
        return self is not Variant.BT

    @property
    def uses_colabels(self) -> bool:
        return self is Variant.DCBT

    @property
    def uses_pbt(self) -> bool:
        return self in (Variant.DCBT, Variant.DCBT_NO_COLLAB)


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    t_total: int = 3000
    t_init: int | None = None          # None: 20% of t_total
    t_alt: int = 100
    beta: float = 0.5
    alpha_bar: float = 0.99
    lambda1: float = 0.1
    lambda2: float = 1e-4
    variant: Variant = Variant.DCBT
    lr: float = 1e-3
    lr_reliability: float | None = None  # None: same as lr
    batch_size: int = 64
    embed_dim: int = 8
    hidden: tuple[int, ...] = (64, 64)
    detach_pbt_input: bool = False     # cut the alpha -> P_BT path during reward updates
    fixed_alpha: float | None = None   # freeze every reliability at this value

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant))
        if self.t_init is None:
            object.__setattr__(self, "t_init", int(round(0.2 * self.t_total)))
        if not 0 <= self.t_init <= self.t_total:
            raise ValueError("need 0 <= t_init <= t_total")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.alpha_bar < 1.0:
            raise ValueError("alpha_bar must lie in (0, 1)")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.t_alt < 1 or self.batch_size < 1:
            raise ValueError("t_alt and batch_size must be positive")

    @property
    def trains_reliability(self) -> bool:
        return self.variant.uses_reliability and self.fixed_alpha is None

    def phase(self, t: int) -> str:
        """Which parameter group step ``t`` (1-based) updates: init, reward or reliability."""
        if t <= self.t_init:
            return "init"
        if not self.trains_reliability or (t % self.t_alt) < self.beta * self.t_alt:
            return "reward"
        return "reliability"


@dataclass
class PreferenceModel:
    reward: RewardNet
    reliability: ReliabilityNet | None = None

    def state(self) -> Params:
        out = {f"reward/{k}": v for k, v in self.reward.params.items()}
        out["meta/reward_shape"] = np.array([self.reward.n_states, self.reward.n_actions, *self.reward.hidden])
        if self.reliability is not None:
            out.update({f"reliability/{k}": v for k, v in self.reliability.params.items()})
            out["meta/reliability_shape"] = np.array([self.reliability.n_annotators, self.reliability.dim])
        return out

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.state())

    @classmethod
    def load(cls, path: str | Path) -> "PreferenceModel":
        data = load_checkpoint(path)
        n_s, n_a, *hidden = (int(v) for v in data["meta/reward_shape"])
        reward = RewardNet(n_s, n_a, hidden, zero=True)
        for k in reward.params:
            reward.params[k] = data[f"reward/{k}"]
        reliability = None
        if "meta/reliability_shape" in data:
            m, d = (int(v) for v in data["meta/reliability_shape"])
            reliability = ReliabilityNet(m, d, zero=True)
            for k in reliability.params:
                reliability.params[k] = data[f"reliability/{k}"]
        return cls(reward, reliability)


def init_model(dataset: PreferenceDataset, n_states: int, n_actions: int, config: TrainConfig,
               seed: int) -> PreferenceModel:
    """Random initial networks. The reward net depends only on ``seed``, so variants share it."""
    reward_ss, rel_ss, _ = np.random.SeedSequence(seed).spawn(3)
    reward = RewardNet(n_states, n_actions, config.hidden, rng=np.random.default_rng(reward_ss))
    reliability = None
    if config.variant.uses_reliability:
        reliability = ReliabilityNet(dataset.n_annotators, config.embed_dim, rng=np.random.default_rng(rel_ss))
    return PreferenceModel(reward, reliability)


# --------------------------------------------------------------------------
# Probability models

def clip_score(net: RewardNet, clip: Clip) -> float:
    """Mean predicted reward over the clip."""
    return float(np.mean(net(clip.states, clip.actions)))


def p_bt(g1, g2):
    """Bradley-Terry probability that the first clip is preferred."""
    return expit(np.subtract(g1, g2))


def p_crowd_bt(alpha, p):
    return alpha * p + (1.0 - alpha) * (1.0 - p)


def p_dcbt(alpha_i, p):
    return alpha_i * p + (1.0 - alpha_i) * (1.0 - p)


# --------------------------------------------------------------------------
# Dataset tensors

@dataclass
class _Tensors:
    sa: np.ndarray          # (n_clips, T) flat state-action index
    first: np.ndarray
    second: np.ndarray
    soft: np.ndarray
    annotator: np.ndarray
    group_avg: list[sp.csr_matrix]  # per label group: (N, M) averaging matrices over co-labels
    n_actions: int


def _colabel_matrices(dataset: PreferenceDataset) -> list[sp.csr_matrix]:
    arr = dataset.arrays()
    N, M = len(dataset), dataset.n_annotators
    rows, cols, vals, groups = [], [], [], []
    for members in dataset.query_index.values():
        for i in members:
            others = [j for j in members if j != i]
            for g in range(len(LABELS)):
                in_group = [j for j in others if arr["label"][j] == g]
                for j in in_group:
                    rows.append(i)
                    cols.append(arr["annotator"][j])
                    vals.append(1.0 / len(in_group))
                    groups.append(g)
    rows, cols, vals, groups = map(np.asarray, (rows, cols, vals, groups))
    mats = []
    for g in range(len(LABELS)):
        sel = groups == g if len(groups) else np.zeros(0, dtype=bool)
        mats.append(sp.csr_matrix((vals[sel].astype(float), (rows[sel].astype(np.int64), cols[sel].astype(np.int64))),
                                  shape=(N, M)))
    return mats


def _tensors(dataset: PreferenceDataset, n_actions: int) -> _Tensors:
    cached = getattr(dataset, "_pref_tensors", None)
    if cached is not None and cached.n_actions == n_actions:
        return cached
    arr = dataset.arrays()
    t = _Tensors(arr["states"] * n_actions + arr["actions"], arr["first"], arr["second"], arr["soft"],
                 arr["annotator"], _colabel_matrices(dataset), n_actions)
    dataset._pref_tensors = t
    return t


def group_means(net: ReliabilityNet, dataset: PreferenceDataset, i: int) -> list[np.ndarray]:
    """Mean embedding of co-label annotators per label group (zero vector for an empty group)."""
    recs = dataset.records
    co = dataset.colabel_indices(i)
    E = net.params["embeddings"]
    means = []
    for lab in LABELS:
        ws = [recs[j].annotator for j in co if recs[j].label is lab]
        means.append(E[ws].mean(axis=0) if ws else np.zeros(net.dim))
    return means


def record_reliability(model: PreferenceModel, dataset: PreferenceDataset, i: int, variant: Variant) -> float:
    """Reliability of record ``i`` under a Crowd-BT or DCBT variant."""
    from .nnet import reliability_forward

    variant = Variant(variant)
    if not variant.uses_reliability:
        raise ValueError("the BT variant has no reliability model")
    if not 0 <= i < len(dataset):
        raise IndexError(f"record index {i} out of range")
    net = model.reliability
    rec = dataset.records[i]
    zeros = [np.zeros(net.dim)] * 3
    means = group_means(net, dataset, i) if variant.uses_colabels else zeros
    p = 0.0
    if variant.uses_pbt:
        clips = dataset.clips
        p = float(p_bt(clip_score(model.reward, clips[rec.first]), clip_score(model.reward, clips[rec.second])))
    return reliability_forward(net, rec.annotator, means, p)


# --------------------------------------------------------------------------
# Losses and gradients

@dataclass
class LossParts:
    data: float     # loss_dcbt, BT cross-entropy, or loss_init depending on the objective
    reg: float
    l1l2: float
    total: float


def _bce(target, prob):
    """Soft-target cross-entropy per row, and its derivative in ``prob`` (zero where floored)."""
    pc = np.clip(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)
    value = -(target * np.log(pc) + (1.0 - target) * np.log1p(-pc))
    inside = (prob > PROB_FLOOR) & (prob < 1.0 - PROB_FLOOR)
    deriv = np.where(inside, -target / pc + (1.0 - target) / (1.0 - pc), 0.0)
    return value, deriv


def evaluate(model: PreferenceModel, dataset: PreferenceDataset, batch, variant: Variant, *,
             objective: str = "total", w_data: float = 1.0, lambda1: float = 0.0, lambda2: float = 0.0,
             alpha_bar: float = 0.99, detach_pbt_input: bool = False, fixed_alpha: float | None = None,
             want_grad: bool = True) -> tuple[LossParts, Params, Params]:
    """Loss value and gradients for one batch.

    ``objective="total"`` scores the data term with the variant's model
    (plain BT for ``Variant.BT``). ``objective="init"`` uses the BT
    cross-entropy plus the cross-entropy pulling every reliability towards
    ``alpha_bar``; the latter sends no gradient to the reward network. The
    returned total is ``w_data * data + lambda1 * reg + lambda2 * l1l2``.
    Gradients come back as (reward-net grads, reliability-net grads).
    """
    variant = Variant(variant)
    if objective not in ("total", "init"):
        raise ValueError(f"unknown objective {objective!r}")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    net = model.reward
    T = _tensors(dataset, net.n_actions)
    B, tc = len(batch), T.sa.shape[1]

    sa = np.concatenate([T.sa[T.first[batch]], T.sa[T.second[batch]]])  # (2B, tc)
    uniq, inv = np.unique(sa, return_inverse=True)
    inv = inv.reshape(sa.shape)
    r_u, acts = net.forward(net.encode(uniq // net.n_actions, uniq % net.n_actions))
    G = r_u[inv].mean(axis=1)
    g1, g2 = G[:B], G[B:]
    p = expit(g1 - g2)
    y = T.soft[batch]

    rel_active = variant.uses_reliability and fixed_alpha is None
    dp = np.zeros(B)
    d_alpha = None
    rel_grads: Params = {}
    if variant.uses_reliability:
        if fixed_alpha is not None:
            alpha = np.full(B, float(fixed_alpha))
        else:
            rel = model.reliability
            group_avg = [m[batch] for m in T.group_avg] if variant.uses_colabels else None
            alpha, rel_cache = rel.forward(T.annotator[batch], group_avg, p if variant.uses_pbt else None)

    if objective == "init" or not variant.uses_reliability:
        ce, dce = _bce(y, p)
        data = ce.mean()
        dp += dce / B
        if objective == "init" and variant.uses_reliability:
            rce, drce = _bce(alpha_bar, alpha)
            data += rce.mean()
            d_alpha = drce / B
    else:
        P = alpha * p + (1.0 - alpha) * (1.0 - p)
        ce, dce = _bce(y, P)
        data = ce.mean()
        dP = dce / B
        dp += dP * (2.0 * alpha - 1.0)
        d_alpha = dP * (2.0 * p - 1.0)

    if want_grad and rel_active and d_alpha is not None:
        rel_grads, dp_alpha = model.reliability.backward(rel_cache, d_alpha)
        rel_grads = {k: w_data * v for k, v in rel_grads.items()}
        # the init objective's reliability term never reaches the reward net
        if objective == "total" and variant.uses_pbt and not detach_pbt_input:
            dp = dp + dp_alpha

    reg_terms = np.logaddexp(0.0, G) + np.logaddexp(0.0, -G)
    reg = reg_terms.mean()
    l1l2 = sum(float(np.abs(v).sum() + (v * v).sum()) for v in net.params.values())
    total = w_data * data + lambda1 * reg + lambda2 * l1l2
    parts = LossParts(float(data), float(reg), float(l1l2), float(total))
    if not want_grad:
        return parts, {}, {}

    dG = lambda1 * (2.0 * expit(G) - 1.0) / (2 * B)
    dpre = w_data * dp * p * (1.0 - p)
    dG[:B] += dpre
    dG[B:] -= dpre
    d_r = np.bincount(inv.ravel(), weights=np.repeat(dG / tc, tc), minlength=len(uniq))
    reward_grads = net.backward(acts, d_r)
    if lambda2:
        for k, v in net.params.items():
            reward_grads[k] = reward_grads[k] + lambda2 * (np.sign(v) + 2.0 * v)
    return parts, reward_grads, rel_grads


def loss_dcbt(model: PreferenceModel, dataset: PreferenceDataset, batch, variant: Variant = Variant.DCBT) -> float:
    """Soft-label cross-entropy of the variant's preference model (plain BT for ``Variant.BT``)."""
    return evaluate(model, dataset, batch, variant, want_grad=False)[0].data


def bt_cross_entropy(model: PreferenceModel, dataset: PreferenceDataset, batch) -> float:
    return loss_dcbt(model, dataset, batch, Variant.BT)


def loss_reg(net: RewardNet, dataset: PreferenceDataset, batch) -> float:
    """Penalty keeping clip scores near zero: mean over both clips of -log sigma(G) - log(1 - sigma(G))."""
    return evaluate(PreferenceModel(net), dataset, batch, Variant.BT, want_grad=False)[0].reg


def loss_l1l2(net: RewardNet) -> float:
    return float(sum(np.abs(v).sum() + (v * v).sum() for v in net.params.values()))


def loss_total(model: PreferenceModel, dataset: PreferenceDataset, batch, config: TrainConfig) -> float:
    return evaluate(model, dataset, batch, config.variant, lambda1=config.lambda1, lambda2=config.lambda2,
                    fixed_alpha=config.fixed_alpha, want_grad=False)[0].total


def loss_init(model: PreferenceModel, dataset: PreferenceDataset, batch, alpha_bar: float = 0.99,
              variant: Variant = Variant.DCBT) -> float:
    return evaluate(model, dataset, batch, variant, objective="init", alpha_bar=alpha_bar, want_grad=False)[0].data


def predicted_reliability(model: PreferenceModel, dataset: PreferenceDataset, variant: Variant) -> np.ndarray:
    """Reliability of every record under the current parameters."""
    variant = Variant(variant)
    if not variant.uses_reliability or model.reliability is None:
        raise ValueError("variant has no reliability model")
    T = _tensors(dataset, model.reward.n_actions)
    net = model.reward
    G = net.reward_table().ravel()[T.sa].mean(axis=1)
    p = expit(G[T.first] - G[T.second])
    group_avg = T.group_avg if variant.uses_colabels else None
    alpha, _ = model.reliability.forward(T.annotator, group_avg, p if variant.uses_pbt else None)
    return alpha


# --------------------------------------------------------------------------
# Training

@dataclass
class TrainResult:
    model: PreferenceModel
    log: list[dict] = field(default_factory=list)


LOG_COLUMNS = ("step", "phase", "loss_dcbt", "loss_reg", "loss_l1l2", "loss_total")


def train(dataset: PreferenceDataset, config: TrainConfig, seed: int, *, n_states: int | None = None,
          n_actions: int | None = None, model: PreferenceModel | None = None) -> TrainResult:
    """Two-phase training: joint initialisation, then alternating reward / reliability updates."""
    if len(dataset) == 0:
        raise ValueError("dataset has no records")
    arr = dataset.arrays()
    if model is None:
        n_states = n_states if n_states is not None else int(arr["states"].max()) + 1
        n_actions = n_actions if n_actions is not None else int(arr["actions"].max()) + 1
        model = init_model(dataset, n_states, n_actions, config, seed)
    batch_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    opt_r = Adam(config.lr)
    opt_w = Adam(config.lr if config.lr_reliability is None else config.lr_reliability)
    log = []
    for t in range(1, config.t_total + 1):
        batch = batch_rng.integers(len(dataset), size=config.batch_size)
        phase = config.phase(t)
        parts, g_r, g_w = evaluate(
            model, dataset, batch, config.variant,
            objective="init" if phase == "init" else "total",
            lambda1=config.lambda1, lambda2=config.lambda2, alpha_bar=config.alpha_bar,
            detach_pbt_input=config.detach_pbt_input, fixed_alpha=config.fixed_alpha)
        if not math.isfinite(parts.total):
            raise TrainingDiverged(t, f"non-finite loss {parts.total}")
        if phase in ("init", "reward"):
            opt_r.step(model.reward.params, g_r)
        if phase in ("init", "reliability") and config.trains_reliability:
            opt_w.step(model.reliability.params, g_w)
        log.append({"step": t, "phase": phase, "loss_dcbt": parts.data, "loss_reg": parts.reg,
                    "loss_l1l2": parts.l1l2, "loss_total": parts.total})
    return TrainResult(model, log)


def write_log(path: str | Path, log: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in log:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
