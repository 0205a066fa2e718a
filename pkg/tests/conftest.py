import numpy as np
import pytest

from crowdpref.core import Clip, Label, PreferenceDataset, PreferenceRecord
from crowdpref.nnet import ReliabilityNet, RewardNet, flatten, unflatten
from crowdpref.prefmodels import PreferenceModel, evaluate

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):  # "criterion N: ..."
            terminalreporter.write_line(line)


def tiny_dataset(seed=0, n_clips=6, length=4, n_states=5, n_actions=3, n_records=5, n_annotators=4):
    """Random clips plus ``n_records`` labels, with one query labelled three times."""
    rng = np.random.default_rng(seed)
    clips = [Clip(k, tuple(rng.integers(n_states, size=length).tolist()),
                  tuple(rng.integers(n_actions, size=length).tolist())) for k in range(n_clips)]
    labels = list(Label)
    records = [PreferenceRecord(0, 1, labels[k % 3], k % n_annotators) for k in range(min(3, n_records))]
    for k in range(3, n_records):
        a, b = rng.choice(n_clips, size=2, replace=False)
        records.append(PreferenceRecord(int(a), int(b), labels[int(rng.integers(3))], int(rng.integers(n_annotators))))
    return PreferenceDataset(clips, records, n_annotators)


def random_model(dataset, n_states=5, n_actions=3, seed=1, hidden=(6, 5), dim=3, reliability=True):
    rng = np.random.default_rng(seed)
    reward = RewardNet(n_states, n_actions, hidden, rng=rng)
    rel = ReliabilityNet(dataset.n_annotators, dim, rng=rng) if reliability else None
    if rel is not None:
        # larger embeddings so the co-label and P_BT paths carry real signal
        rel.params["embeddings"] *= 5.0
        rel.params["head_b"][:] = 0.3
    return PreferenceModel(reward, rel)


def flat_objective(model, dataset, batch, variant, **kw):
    """Map a flat vector over all trainable parameters to (loss, gradient)."""
    groups = [("reward", model.reward.params)]
    if model.reliability is not None:
        groups.append(("reliability", model.reliability.params))
    names = [(g, n) for g, p in groups for n in p]
    like = {f"{g}/{n}": p[n] for g, p in groups for n in p}

    def fn(flat):
        values = unflatten(flat, like)
        for g, n in names:
            target = model.reward.params if g == "reward" else model.reliability.params
            target[n] = values[f"{g}/{n}"]
        parts, gr, gw = evaluate(model, dataset, batch, variant, **kw)
        grads = {**{f"reward/{k}": v for k, v in gr.items()}, **{f"reliability/{k}": v for k, v in gw.items()}}
        full = np.concatenate([grads.get(k, np.zeros_like(v)).ravel() for k, v in like.items()])
        return parts.total, full

    return fn, flatten(like)


@pytest.fixture
def dataset():
    return tiny_dataset()

