"""Simulated annotators and budget-constrained assembly of noisy preference datasets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LABELS, Clip, Label, PreferenceDataset, PreferenceRecord, format_record, parse_record
from .envgen import Mdp, true_clip_score


class InfeasibleBudget(ValueError):
    """Annotator caps make the requested labelling impossible."""


@dataclass(frozen=True)
class AnnotatorProfile:
    id: int
    ability: float

    def __post_init__(self):
        if not 0.0 <= self.ability <= 1.0:
            raise ValueError(f"ability {self.ability} outside [0, 1]")


@dataclass(frozen=True)
class CrowdConfig:
    n_annotators: int = 500
    max_queries_per_annotator: int = 20
    max_annotators_per_query: int = 10
    tie_epsilon: float | None = None  # None: 5% of the observed clip-score range
    beta_params: tuple[float, float] = (7.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_annotators < 1 or self.max_queries_per_annotator < 1 or self.max_annotators_per_query < 1:
            raise ValueError("crowd sizes and caps must be positive")
        if self.max_annotators_per_query > self.n_annotators:
            raise ValueError("max_annotators_per_query exceeds n_annotators")
        if self.tie_epsilon is not None and self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be non-negative")


@dataclass
class GroundTruth:
    """Evaluation-only channel: never handed to a learner."""

    true_labels: list[Label]          # per record
    abilities: np.ndarray             # per annotator
    clip_scores: np.ndarray | None = None
    tie_epsilon: float | None = None

    def query_truth(self, dataset: PreferenceDataset) -> dict[tuple[int, int], Label]:
        return {rec.query: lab for rec, lab in zip(dataset.records, self.true_labels)}


def sample_annotators(config: CrowdConfig) -> list[AnnotatorProfile]:
    rng = np.random.default_rng(config.seed)
    a, b = config.beta_params
    abilities = rng.beta(a, b, size=config.n_annotators)
    return [AnnotatorProfile(k, float(p)) for k, p in enumerate(abilities)]


def ground_truth_label(score1: float, score2: float, tie_epsilon: float) -> Label:
    diff = score1 - score2
    if diff > tie_epsilon:
        return Label.SUCC
    if -diff > tie_epsilon:
        return Label.PREC
    return Label.APPROX


def annotate(profile: AnnotatorProfile, truth: Label, rng: np.random.Generator) -> Label:
    """Emit ``truth`` w.p. ``ability``, else one of the two wrong labels uniformly."""
    u = rng.random()
    if u < profile.ability:
        return truth
    wrong = [lab for lab in LABELS if lab is not truth]
    return wrong[int((u - profile.ability) / (1.0 - profile.ability) >= 0.5)]


def _sample_pairs(n_clips: int, n_queries: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    n_pairs = n_clips * (n_clips - 1) // 2
    if n_queries > n_pairs:
        raise InfeasibleBudget(f"{n_queries} queries requested but only {n_pairs} clip pairs exist")
    seen: set[tuple[int, int]] = set()
    pairs = []
    while len(pairs) < n_queries:
        i, j = rng.integers(n_clips, size=2)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        pairs.append((int(i), int(j)))  # random orientation
    return pairs


def build_dataset(clips: Sequence[Clip], mdp: Mdp, n_queries: int, labels_per_query: int,
                  config: CrowdConfig) -> tuple[PreferenceDataset, GroundTruth]:
    """Sample random queries and label each with distinct, budget-capped simulated annotators."""
    if labels_per_query > config.max_annotators_per_query:
        raise InfeasibleBudget(
            f"labels_per_query={labels_per_query} exceeds max_annotators_per_query={config.max_annotators_per_query}")
    total = n_queries * labels_per_query
    capacity = config.n_annotators * config.max_queries_per_annotator
    if total > capacity:
        raise InfeasibleBudget(f"{total} labels requested but annotators can give at most {capacity}")

    profiles = sample_annotators(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    scores = np.array([true_clip_score(c, mdp) for c in clips])
    eps = config.tie_epsilon
    if eps is None:
        eps = 0.05 * float(scores.max() - scores.min()) if len(scores) else 0.0

    pairs = _sample_pairs(len(clips), n_queries, rng)
    budget = np.full(config.n_annotators, config.max_queries_per_annotator)
    records, truths = [], []
    for first, second in pairs:
        truth = ground_truth_label(scores[first], scores[second], eps)
        available = np.flatnonzero(budget > 0)
        if len(available) < labels_per_query:
            raise InfeasibleBudget("annotator budgets exhausted before all queries were labelled")
        chosen = rng.choice(available, size=labels_per_query, replace=False)
        for w in chosen:
            budget[w] -= 1
            records.append(PreferenceRecord(first, second, annotate(profiles[w], truth, rng), int(w)))
            truths.append(truth)

    dataset = PreferenceDataset(list(clips), records, config.n_annotators)
    abilities = np.array([p.ability for p in profiles])
    return dataset, GroundTruth(truths, abilities, scores, eps)


def write_truth(path: str | Path, dataset: PreferenceDataset, truth: GroundTruth) -> None:
    with open(path, "w") as fh:
        for rec, lab in zip(dataset.records, truth.true_labels):
            fh.write(f"{format_record(rec)},{lab.value},{float(truth.abilities[rec.annotator])!r}\n")


def read_truth(path: str | Path, n_annotators: int | None = None) -> GroundTruth:
    labels, ability_of = [], {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            rec = parse_record(line)
            labels.append(Label.parse(parts[4]))
            ability_of[rec.annotator] = float(parts[5])
    m = n_annotators if n_annotators is not None else max(ability_of, default=-1) + 1
    abilities = np.full(m, np.nan)
    for w, p in ability_of.items():
        abilities[w] = p
    return GroundTruth(labels, abilities)
