import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdpref.core import (Clip, Label, PreferenceDataset, PreferenceRecord, colabels, load_dataset,
                            parse_clip, parse_record, format_clip, format_record, read_records, soft_label,
                            write_clips, write_records)


def _clips(n, length=3):
    return [Clip(k, (k,) * length, (0,) * length) for k in range(n)]


def test_soft_labels():
    assert [soft_label(lab) for lab in (Label.SUCC, Label.APPROX, Label.PREC)] == [1.0, 0.5, 0.0]
    assert len(Label) == 3


def test_label_flip_is_involution():
    for lab in Label:
        assert lab.flipped().flipped() is lab
    assert Label.SUCC.flipped() is Label.PREC
    assert Label.parse(" Approx ") is Label.APPROX


def test_clip_invariants():
    c = Clip(0, (1, 2), (0, 1))
    assert c.length == 2 and c.steps == [(1, 0), (2, 1)]
    with pytest.raises(ValueError):
        Clip(0, (), ())
    with pytest.raises(ValueError):
        Clip(0, (1, 2), (0,))


def test_record_rejects_self_comparison():
    with pytest.raises(ValueError):
        PreferenceRecord(3, 3, Label.SUCC, 0)
    with pytest.raises(ValueError):
        PreferenceRecord(0, 1, Label.SUCC, -1)


def test_dataset_rejects_mixed_lengths_and_bad_ids():
    with pytest.raises(ValueError, match="mixed lengths"):
        PreferenceDataset([Clip(0, (0,), (0,)), Clip(1, (0, 1), (0, 0))], [])
    with pytest.raises(ValueError, match="dense"):
        PreferenceDataset([Clip(1, (0,), (0,))], [])
    with pytest.raises(ValueError, match="n_annotators"):
        PreferenceDataset(_clips(2), [PreferenceRecord(0, 1, Label.SUCC, 5)], n_annotators=3)
    with pytest.raises(ValueError, match="unknown clip"):
        PreferenceDataset(_clips(2), [PreferenceRecord(0, 7, Label.SUCC, 0)])


def test_colabels_example():
    recs = [PreferenceRecord(0, 1, Label.SUCC, 0), PreferenceRecord(0, 1, Label.PREC, 1),
            PreferenceRecord(0, 1, Label.APPROX, 2), PreferenceRecord(1, 2, Label.SUCC, 0)]
    ds = PreferenceDataset(_clips(3), recs)
    assert colabels(ds, 0) == {(Label.PREC, 1), (Label.APPROX, 2)}
    assert colabels(ds, 3) == set()
    with pytest.raises(IndexError):
        colabels(ds, 4)


def test_reversed_pair_is_a_different_query():
    recs = [PreferenceRecord(0, 1, Label.SUCC, 0), PreferenceRecord(1, 0, Label.PREC, 1)]
    ds = PreferenceDataset(_clips(2), recs)
    assert ds.colabel_indices(0) == [] and len(ds.query_index) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.sampled_from(list(Label)), st.integers(0, 6)),
                max_size=40))
def test_query_index_partitions_records(raw):
    recs = [PreferenceRecord(a, b, lab, w) for a, b, lab, w in raw if a != b]
    ds = PreferenceDataset(_clips(5), recs)
    seen = sorted(i for members in ds.query_index.values() for i in members)
    assert seen == list(range(len(recs)))
    for i in range(len(recs)):
        co = ds.colabel_indices(i)
        assert i not in co
        assert all(recs[j].query == recs[i].query for j in co)
        assert len(co) == len(ds.query_index[recs[i].query]) - 1


def test_arrays_are_columnar():
    recs = [PreferenceRecord(0, 1, Label.APPROX, 2)]
    arr = PreferenceDataset(_clips(2, length=4), recs).arrays()
    assert arr["states"].shape == (2, 4)
    assert arr["soft"].tolist() == [0.5] and arr["annotator"].tolist() == [2]


@given(st.integers(0, 100), st.lists(st.tuples(st.integers(0, 50), st.integers(0, 3)), min_size=1, max_size=10))
def test_clip_text_round_trip(cid, steps):
    clip = Clip(cid, tuple(s for s, _ in steps), tuple(a for _, a in steps))
    assert parse_clip(format_clip(clip)) == clip


def test_record_text_round_trip(tmp_path):
    recs = [PreferenceRecord(0, 1, Label.SUCC, 3), PreferenceRecord(2, 0, Label.PREC, 0)]
    assert parse_record(format_record(recs[0])) == recs[0]
    write_records(tmp_path / "d.txt", recs)
    assert read_records(tmp_path / "d.txt") == recs
    write_clips(tmp_path / "c.txt", _clips(3))
    ds = load_dataset(tmp_path / "c.txt", tmp_path / "d.txt", n_annotators=4)
    assert ds.records == recs and ds.n_annotators == 4
    assert np.array_equal(ds.arrays()["first"], [0, 2])
