"""Shared domain types: clips, preference labels/records and the preference dataset."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Label(enum.Enum):
    """Three-valued preference judgment on an ordered clip pair."""

    SUCC = "succ"      # first clip better
    APPROX = "approx"  # roughly equal
    PREC = "prec"      # second clip better

    @classmethod
    def parse(cls, text: str) -> "Label":
        return cls(text.strip().lower())

    def flipped(self) -> "Label":
        return _FLIP[self]


_FLIP = {Label.SUCC: Label.PREC, Label.APPROX: Label.APPROX, Label.PREC: Label.SUCC}
_SOFT = {Label.SUCC: 1.0, Label.APPROX: 0.5, Label.PREC: 0.0}
LABELS = (Label.SUCC, Label.APPROX, Label.PREC)
LABEL_INDEX = {lab: k for k, lab in enumerate(LABELS)}


def soft_label(label: Label) -> float:
    """Map a label to its soft target: SUCC -> 1, APPROX -> 0.5, PREC -> 0."""
    return _SOFT[label]


@dataclass(frozen=True)
class Clip:
    id: int
    states: tuple[int, ...]
    actions: tuple[int, ...]

    def __post_init__(self):
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions differ in length")
        if len(self.states) < 1:
            raise ValueError("clip must contain at least one step")

    @property
    def length(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))


@dataclass(frozen=True)
class PreferenceRecord:
    first: int
    second: int
    label: Label
    annotator: int

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError(f"query compares clip {self.first} with itself")
        if self.annotator < 0:
            raise ValueError("annotator id must be non-negative")

    @property
    def query(self) -> tuple[int, int]:
        return (self.first, self.second)


@dataclass
class PreferenceDataset:
    """Clips plus noisy preference records, indexed by query.

    Queries are keyed by the ordered pair ``(first, second)``; a reversed pair
    is a different query.  ``n_annotators`` fixes the number of worker
    embedding rows and must exceed every annotator id.
    """

    clips: list[Clip]
    records: list[PreferenceRecord]
    n_annotators: int | None = None
    query_index: dict[tuple[int, int], list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.clips = list(self.clips)
        self.records = list(self.records)
        for k, clip in enumerate(self.clips):
            if clip.id != k:
                raise ValueError(f"clip ids must be dense: position {k} holds id {clip.id}")
        lengths = {c.length for c in self.clips}
        if len(lengths) > 1:
            raise ValueError(f"clips have mixed lengths {sorted(lengths)}")
        max_id = max((r.annotator for r in self.records), default=-1)
        if self.n_annotators is None:
            self.n_annotators = max_id + 1
        elif max_id >= self.n_annotators:
            raise ValueError(f"annotator id {max_id} >= n_annotators {self.n_annotators}")
        n = len(self.clips)
        index: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, rec in enumerate(self.records):
            if not (0 <= rec.first < n and 0 <= rec.second < n):
                raise ValueError(f"record {i} references an unknown clip")
            index[rec.query].append(i)
        self.query_index = dict(index)
        self._arrays = None
        self._colabel_cache = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def clip_length(self) -> int:
        return self.clips[0].length if self.clips else 0

    def arrays(self) -> dict[str, np.ndarray]:
        """Columnar view of the records and clips (cached)."""
        if self._arrays is None:
            recs = self.records
            self._arrays = {
                "first": np.array([r.first for r in recs], dtype=np.int64),
                "second": np.array([r.second for r in recs], dtype=np.int64),
                "label": np.array([LABEL_INDEX[r.label] for r in recs], dtype=np.int64),
                "soft": np.array([soft_label(r.label) for r in recs], dtype=np.float64),
                "annotator": np.array([r.annotator for r in recs], dtype=np.int64),
                "states": np.array([c.states for c in self.clips], dtype=np.int64).reshape(len(self.clips), -1),
                "actions": np.array([c.actions for c in self.clips], dtype=np.int64).reshape(len(self.clips), -1),
            }
        return self._arrays

    def colabel_indices(self, i: int) -> list[int]:
        if not 0 <= i < len(self.records):
            raise IndexError(f"record index {i} out of range [0, {len(self.records)})")
        return [j for j in self.query_index[self.records[i].query] if j != i]


def colabels(dataset: PreferenceDataset, i: int) -> set[tuple[Label, int]]:
    """Return the other (label, annotator) pairs given to record ``i``'s query."""
    recs = dataset.records
    return {(recs[j].label, recs[j].annotator) for j in dataset.colabel_indices(i)}


# --------------------------------------------------------------------------
# Serialization

def format_record(rec: PreferenceRecord) -> str:
    return f"{rec.first},{rec.second},{rec.label.value},{rec.annotator}"


def parse_record(line: str) -> PreferenceRecord:
    parts = line.strip().split(",")
    if len(parts) < 4:
        raise ValueError(f"malformed record line: {line!r}")
    return PreferenceRecord(int(parts[0]), int(parts[1]), Label.parse(parts[2]), int(parts[3]))


def format_clip(clip: Clip) -> str:
    pairs = ",".join(f"{s}:{a}" for s, a in zip(clip.states, clip.actions))
    return f"{clip.id},{pairs}"


def parse_clip(line: str) -> Clip:
    head, *pairs = line.strip().split(",")
    states, actions = [], []
    for p in pairs:
        s, a = p.split(":")
        states.append(int(s))
        actions.append(int(a))
    return Clip(int(head), tuple(states), tuple(actions))


def _lines(path: Path) -> Iterable[str]:
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                yield line


def write_clips(path: str | Path, clips: Sequence[Clip]) -> None:
    with open(path, "w") as fh:
        for clip in clips:
            fh.write(format_clip(clip) + "\n")


def read_clips(path: str | Path) -> list[Clip]:
    return [parse_clip(line) for line in _lines(Path(path))]


def write_records(path: str | Path, records: Sequence[PreferenceRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


def read_records(path: str | Path) -> list[PreferenceRecord]:
    return [parse_record(line) for line in _lines(Path(path))]


def load_dataset(clips_path: str | Path, records_path: str | Path,
                 n_annotators: int | None = None) -> PreferenceDataset:
    return PreferenceDataset(read_clips(clips_path), read_records(records_path), n_annotators)
