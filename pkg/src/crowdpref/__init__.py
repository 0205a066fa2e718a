"""Reward learning from noisy crowdsourced clip preferences (BT, Crowd-BT, DCBT)."""

from .core import Clip, Label, PreferenceDataset, PreferenceRecord, colabels, soft_label
from .prefmodels import PreferenceModel, TrainConfig, Variant, train

__version__ = "0.1.0"

__all__ = ["Clip", "Label", "PreferenceDataset", "PreferenceRecord", "colabels", "soft_label",
           "PreferenceModel", "TrainConfig", "Variant", "train"]
