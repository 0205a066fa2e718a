"""Majority-vote aggregation baseline and raw-label quality metrics."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from .core import LABELS, Label, PreferenceDataset, PreferenceRecord
from .crowd import GroundTruth

# collapsed datasets carry a single pseudo-annotator
MV_ANNOTATOR = 0


class VoteTally(Counter):
    """Label counts for one query."""

    def winners(self) -> list[Label]:
        if sum(self.values()) < 1:
            raise ValueError("cannot pick a winner from an empty tally")
        top = max(self.values())
        return [lab for lab in LABELS if self.get(lab, 0) == top]


def majority_vote(labels: Sequence[Label], rng: np.random.Generator) -> Label:
    """Modal label; ties (two- or three-way) are broken uniformly at random."""
    if not labels:
        raise ValueError("majority_vote needs at least one label")
    winners = VoteTally(labels).winners()
    if len(winners) == 1:
        return winners[0]
    return winners[int(rng.integers(len(winners)))]


def mv_collapse(dataset: PreferenceDataset, seed: int) -> PreferenceDataset:
    """One record per query carrying its majority label."""
    rng = np.random.default_rng(seed)
    records = []
    for (first, second), members in dataset.query_index.items():
        label = majority_vote([dataset.records[j].label for j in members], rng)
        records.append(PreferenceRecord(first, second, label, MV_ANNOTATOR))
    return PreferenceDataset(dataset.clips, records, n_annotators=1)


def label_error_rate(dataset: PreferenceDataset, truth: GroundTruth | dict) -> float:
    """Fraction of records whose label differs from the ground truth of their query.

    ``truth`` is either the simulator's ground truth for the raw dataset or a
    ``{query: label}`` map, which also covers collapsed datasets.
    """
    if not isinstance(truth, dict):
        if len(truth.true_labels) != len(dataset):
            raise KeyError("ground truth does not cover every record")
        truth_of = truth.true_labels
        wrong = sum(rec.label is not truth_of[i] for i, rec in enumerate(dataset.records))
    else:
        wrong = 0
        for rec in dataset.records:
            if rec.query not in truth:
                raise KeyError(f"no ground truth for query {rec.query}")
            wrong += rec.label is not truth[rec.query]
    return wrong / len(dataset) if len(dataset) else 0.0
