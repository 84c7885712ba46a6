"""Feature extraction, labeling, and dataset harvesting."""

import io

import pytest

from modegate.codec import (BlockRecord, Compound, CompoundMode, MotionVector,
                            ReferenceSlot, Single, SingleMode, ZERO_MV)
from modegate.encoder import Exhaustive, encode_clip
from modegate.codec import QuantLevel
from modegate.features import (FeatureVector, extract_features, harvest,
                               label_block, read_dataset_csv,
                               samples_from_records, write_dataset_csv)
from modegate.video import gen_synthetic


def rec(choice):
    return BlockRecord(0, 0, choice, 0.0, 0.0, 0)


def test_both_absent_gives_sentinels():
    assert extract_features(None, None) == FeatureVector(7, 12, 7, 12)


def test_compound_left_maps_second_ref_and_mode():
    left = rec(Compound(CompoundMode.NEAREST_NEARESTMV, ReferenceSlot.LAST,
                        ReferenceSlot.GOLDEN, ZERO_MV, ZERO_MV))
    fv = extract_features(left, None)
    assert fv == FeatureVector(int(ReferenceSlot.GOLDEN), 4, 7, 12)


def test_single_left_has_no_second_ref():
    left = rec(Single(SingleMode.NEWMV, ReferenceSlot.LAST, MotionVector(1, 1)))
    fv = extract_features(left, None)
    assert fv.f1 == int(ReferenceSlot.NONE)
    assert fv.f2 == int(SingleMode.NEWMV)


def test_f1_none_whenever_f2_single():
    # invariant over every single mode and reference
    for mode in SingleMode:
        for ref in list(ReferenceSlot)[:7]:
            fv = extract_features(rec(Single(mode, ref, ZERO_MV)), None)
            assert fv.f1 == 7 and 0 <= fv.f2 <= 3


def test_labels():
    assert label_block(rec(Single(SingleMode.NEARESTMV, ReferenceSlot.LAST, ZERO_MV))) == 0
    assert label_block(rec(Compound(CompoundMode.NEW_NEWMV, ReferenceSlot.LAST,
                                    ReferenceSlot.BWDREF, ZERO_MV, ZERO_MV))) == 1


def test_static_clip_labels_all_class0():
    clip = gen_synthetic("static", 64, 64, 4, seed=2)
    samples = harvest([("s", clip)], [32])
    assert samples and all(s.label == 0 for s in samples)


def test_harvest_sample_arithmetic():
    clip = gen_synthetic("noise", 64, 64, 3, seed=1)  # 1 key + 2 inter, 16 blocks
    assert len(harvest([("n", clip)], [32])) == 32
    assert len(harvest([("n", clip)], [32, 43, 55, 63])) == 128


def test_harvest_respects_frame_limit():
    clip = gen_synthetic("noise", 64, 64, 6, seed=1)
    assert len(harvest([("n", clip)], [32], frame_limit=3)) == 32


def test_harvest_deterministic_and_sorted():
    clip = gen_synthetic("two_layer_parallax", 64, 64, 4, seed=3)
    a = harvest([("p", clip)], [43, 32])
    b = harvest([("p", clip)], [43, 32])
    assert a == b
    assert a == sorted(a, key=lambda s: s.sort_key())


def test_features_rederivable_from_record_stream():
    clip = gen_synthetic("two_layer_parallax", 64, 64, 4, seed=3)
    qp = 32
    report = encode_clip(clip, QuantLevel.from_qp(qp), Exhaustive())
    derived = sorted(samples_from_records("p", qp, report.records),
                     key=lambda s: s.sort_key())
    assert derived == harvest([("p", clip)], [qp])


def test_boundary_blocks_keep_sentinels():
    clip = gen_synthetic("noise", 64, 64, 3, seed=1)
    samples = harvest([("n", clip)], [32])
    first = next(s for s in samples if s.block_x == 0 and s.block_y == 0)
    assert first.features == FeatureVector(7, 12, 7, 12)
    top_row = [s for s in samples if s.block_y == 0 and s.block_x > 0]
    assert all(s.features.f3 == 7 and s.features.f4 == 12 for s in top_row)


def test_dataset_csv_round_trip():
    clip = gen_synthetic("two_layer_parallax", 64, 64, 3, seed=4)
    samples = harvest([("p", clip)], [32, 63])
    buf = io.StringIO()
    write_dataset_csv(samples, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "clip,qp,frame,bx,by,f1,f2,f3,f4,label"
    assert read_dataset_csv(io.StringIO(text)) == samples
    buf2 = io.StringIO()
    write_dataset_csv(read_dataset_csv(io.StringIO(text)), buf2)
    assert buf2.getvalue() == text


def test_harvest_requires_clips():
    with pytest.raises(ValueError):
        harvest([], [32])
