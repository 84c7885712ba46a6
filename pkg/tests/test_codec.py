"""Reference slots, qp mapping, reference buffer aging, record CSV."""

import io

import numpy as np
import pytest

from modegate.codec import (BlockRecord, Compound, CompoundMode, MotionVector,
                            QuantLevel, RefBuffer, ReferenceSlot, Single,
                            SingleMode, advance_refs, exp_golomb_bits,
                            lambda_of_qp, mode_id, mv_bits, qstep_of_qp,
                            read_record_csv, write_record_csv)


def test_lambda_examples():
    assert qstep_of_qp(12) == pytest.approx(1.0)
    assert lambda_of_qp(12) == pytest.approx(0.12)
    assert qstep_of_qp(20) == pytest.approx(2.0)
    assert lambda_of_qp(20) == pytest.approx(0.48)


def test_lambda_strictly_monotone():
    lams = [lambda_of_qp(qp) for qp in range(64)]
    steps = [qstep_of_qp(qp) for qp in range(64)]
    assert all(a < b for a, b in zip(lams, lams[1:]))
    assert all(a < b for a, b in zip(steps, steps[1:]))
    assert lambda_of_qp(32) < lambda_of_qp(43)


def test_lambda_out_of_range():
    for qp in (-1, 64):
        with pytest.raises(ValueError):
            lambda_of_qp(qp)


def test_quant_level():
    q = QuantLevel.from_qp(32)
    assert q.qp == 32
    assert q.lam == lambda_of_qp(32)
    assert q.qstep == qstep_of_qp(32)


def test_reference_slot_encoding_round_trip():
    assert len(ReferenceSlot) == 8
    for i in range(8):
        assert int(ReferenceSlot(i)) == i
    assert [s.name for s in ReferenceSlot][:4] == ["LAST", "LAST2", "LAST3", "GOLDEN"]
    assert ReferenceSlot.NONE == 7


def test_mode_enum_sizes_and_ids():
    assert len(SingleMode) == 4
    assert len(CompoundMode) == 8
    mv = MotionVector(0, 0)
    assert mode_id(Single(SingleMode.NEARESTMV, ReferenceSlot.LAST, mv)) == 0
    assert mode_id(Single(SingleMode.GLOBALMV, ReferenceSlot.LAST, mv)) == 3
    assert mode_id(Compound(CompoundMode.NEAREST_NEARESTMV, ReferenceSlot.LAST,
                            ReferenceSlot.GOLDEN, mv, mv)) == 4
    assert mode_id(Compound(CompoundMode.NEW_NEWMV, ReferenceSlot.LAST,
                            ReferenceSlot.GOLDEN, mv, mv)) == 11


def test_compound_validation():
    mv = MotionVector(0, 0)
    with pytest.raises(ValueError, match="must differ"):
        Compound(CompoundMode.NEW_NEWMV, ReferenceSlot.LAST, ReferenceSlot.LAST, mv, mv)
    with pytest.raises(ValueError, match="NONE"):
        Compound(CompoundMode.NEW_NEWMV, ReferenceSlot.LAST, ReferenceSlot.NONE, mv, mv)


def test_second_ref_sentinel():
    mv = MotionVector(1, 2)
    single = BlockRecord(0, 0, Single(SingleMode.NEWMV, ReferenceSlot.GOLDEN, mv), 1.0, 1.0, 0)
    comp = BlockRecord(0, 0, Compound(CompoundMode.NEAR_NEWMV, ReferenceSlot.LAST,
                                      ReferenceSlot.BWDREF, mv, mv), 1.0, 1.0, 0)
    assert single.second_ref == ReferenceSlot.NONE
    assert not single.is_compound
    assert comp.second_ref == ReferenceSlot.BWDREF
    assert comp.is_compound


def _recon(value):
    return np.full((32, 32), value, dtype=np.uint8)


def test_refbuffer_first_inter_frame():
    buf = RefBuffer.initial(_recon(0))
    slots = buf.slots
    assert set(slots) == {ReferenceSlot.LAST, ReferenceSlot.GOLDEN}
    assert np.array_equal(slots[ReferenceSlot.LAST], _recon(0))
    assert np.array_equal(slots[ReferenceSlot.GOLDEN], _recon(0))


def test_refbuffer_age_table_at_frame7():
    # buffer used when coding frame 7: slot k holds recon(7 - age(k))
    buf = RefBuffer.initial(_recon(0))
    for t in range(1, 7):
        buf = advance_refs(buf, _recon(t))
    slots = buf.slots
    expected = {
        ReferenceSlot.LAST: 6, ReferenceSlot.LAST2: 5, ReferenceSlot.LAST3: 4,
        ReferenceSlot.BWDREF: 3, ReferenceSlot.ALTREF: 2, ReferenceSlot.ALTREF2: 1,
        ReferenceSlot.GOLDEN: 0,
    }
    assert set(slots) == set(expected)
    for slot, t in expected.items():
        assert slots[slot][0, 0] == t


def test_refbuffer_static_slots_identical():
    buf = RefBuffer.initial(_recon(42))
    for _ in range(6):
        buf = advance_refs(buf, _recon(42))
    for frame in buf.slots.values():
        assert np.array_equal(frame, _recon(42))


def test_advance_refs_rejects_bad_shape():
    buf = RefBuffer.initial(_recon(0))
    with pytest.raises(ValueError, match="dimensions"):
        advance_refs(buf, np.zeros((16, 16), dtype=np.uint8))


def test_present_slots_in_enum_order():
    buf = RefBuffer.initial(_recon(0))
    buf = advance_refs(buf, _recon(1))
    assert buf.present_slots() == [ReferenceSlot.LAST, ReferenceSlot.LAST2,
                                   ReferenceSlot.GOLDEN]


def test_exp_golomb_bits():
    assert exp_golomb_bits(0) == 1
    assert exp_golomb_bits(1) == 3
    assert exp_golomb_bits(-1) == 3
    assert exp_golomb_bits(2) == 3
    assert exp_golomb_bits(3) == 5
    assert exp_golomb_bits(7) == 7


def test_mv_bits_differential():
    assert mv_bits(MotionVector(2, -1), MotionVector(2, -1)) == 2
    assert mv_bits(MotionVector(3, 0), MotionVector(0, 0)) == 6


def test_record_csv_round_trip():
    mv = MotionVector(3, -2)
    records = [[],
               [BlockRecord(0, 0, Single(SingleMode.NEARESTMV, ReferenceSlot.LAST,
                                         MotionVector(0, 0)), 8.12 * 3.84, 8.12, 0),
                BlockRecord(1, 0, Compound(CompoundMode.NEW_NEARMV, ReferenceSlot.GOLDEN,
                                           ReferenceSlot.ALTREF2, mv, MotionVector(1, 1)),
                            123.456789, 17.5, 42)]]
    buf = io.StringIO()
    write_record_csv(records, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ("frame,block_x,block_y,kind,mode,ref0,ref1,"
                                    "mv0x,mv0y,mv1x,mv1y,rate_bits,sse,rd_cost")
    parsed = read_record_csv(io.StringIO(text))
    assert [f for f, _ in parsed] == [1, 1]
    for (_, got), want in zip(parsed, records[1]):
        assert got.choice == want.choice
        assert got.distortion_sse == want.distortion_sse
        assert got.rate_bits == pytest.approx(want.rate_bits, abs=1e-6)
        assert got.rd_cost == pytest.approx(want.rd_cost, abs=1e-6)
