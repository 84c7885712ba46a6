"""Shared coding model: block grid, reference slots, modes, per-block records.

The codec uses a fixed 16x16 block grid over padded luma, full-pel motion,
and a low-delay reference buffer where the seven named slots alias the
most recent reconstructions (LAST=t-1 ... ALTREF2=t-6) plus the keyframe
in GOLDEN.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import IO, NamedTuple, Union

import numpy as np

BLOCK = 16

# flat per-frame signaling overhead, keeps bitrate nonzero on static clips
FRAME_OVERHEAD_BITS = 64.0


class ReferenceSlot(IntEnum):
    LAST = 0
    LAST2 = 1
    LAST3 = 2
    GOLDEN = 3
    BWDREF = 4
    ALTREF = 5
    ALTREF2 = 6
    NONE = 7


# slots that may appear as the first member of a compound pair
COMPOUND_PRIMARY_SLOTS = (ReferenceSlot.LAST, ReferenceSlot.GOLDEN, ReferenceSlot.BWDREF)

# age of each slot in frames behind the current one; GOLDEN tracks the keyframe
SLOT_AGES = {
    ReferenceSlot.LAST: 1,
    ReferenceSlot.LAST2: 2,
    ReferenceSlot.LAST3: 3,
    ReferenceSlot.BWDREF: 4,
    ReferenceSlot.ALTREF: 5,
    ReferenceSlot.ALTREF2: 6,
}


class SingleMode(IntEnum):
    NEARESTMV = 0
    NEARMV = 1
    NEWMV = 2
    GLOBALMV = 3


class CompoundMode(IntEnum):
    NEAREST_NEARESTMV = 0
    NEAR_NEARMV = 1
    NEAREST_NEWMV = 2
    NEW_NEARESTMV = 3
    NEAR_NEWMV = 4
    NEW_NEARMV = 5
    GLOBAL_GLOBALMV = 6
    NEW_NEWMV = 7


# per-component candidate sources for each compound mode
COMPOUND_COMPONENTS = {
    CompoundMode.NEAREST_NEARESTMV: ("nearest", "nearest"),
    CompoundMode.NEAR_NEARMV: ("near", "near"),
    CompoundMode.NEAREST_NEWMV: ("nearest", "new"),
    CompoundMode.NEW_NEARESTMV: ("new", "nearest"),
    CompoundMode.NEAR_NEWMV: ("near", "new"),
    CompoundMode.NEW_NEARMV: ("new", "near"),
    CompoundMode.GLOBAL_GLOBALMV: ("global", "global"),
    CompoundMode.NEW_NEWMV: ("new", "new"),
}

MODE_ID_ABSENT = 12


class MotionVector(NamedTuple):
    """Full-pel content displacement from reference to current frame."""

    dx: int
    dy: int


ZERO_MV = MotionVector(0, 0)


@dataclass(frozen=True)
class Single:
    mode: SingleMode
    ref: ReferenceSlot
    mv: MotionVector


@dataclass(frozen=True)
class Compound:
    mode: CompoundMode
    ref0: ReferenceSlot
    ref1: ReferenceSlot
    mv0: MotionVector
    mv1: MotionVector

    def __post_init__(self) -> None:
        if self.ref0 == self.ref1:
            raise ValueError("compound references must differ")
        if ReferenceSlot.NONE in (self.ref0, self.ref1):
            raise ValueError("compound cannot reference NONE")


ModeChoice = Union[Single, Compound]


def mode_id(choice: ModeChoice) -> int:
    """Stable categorical encoding: SingleMode 0-3, CompoundMode 4-11."""
    if isinstance(choice, Single):
        return int(choice.mode)
    return 4 + int(choice.mode)


@dataclass(frozen=True)
class BlockRecord:
    """Final coding decision for one 16x16 block."""

    block_x: int
    block_y: int
    choice: ModeChoice
    rd_cost: float
    rate_bits: float
    distortion_sse: int

    @property
    def is_compound(self) -> bool:
        return isinstance(self.choice, Compound)

    @property
    def second_ref(self) -> ReferenceSlot:
        return self.choice.ref1 if isinstance(self.choice, Compound) else ReferenceSlot.NONE


def qstep_of_qp(qp: int) -> float:
    """Quantizer step 2^((qp-12)/8); qp 12 is the lossless unit step."""
    if not 0 <= qp <= 63:
        raise ValueError(f"qp {qp} out of range [0, 63]")
    return 2.0 ** ((qp - 12) / 8.0)


def lambda_of_qp(qp: int) -> float:
    """RD Lagrange multiplier 0.12 * qstep^2, strictly monotone in qp."""
    return 0.12 * qstep_of_qp(qp) ** 2


@dataclass(frozen=True)
class QuantLevel:
    qp: int
    lam: float
    qstep: float

    @classmethod
    def from_qp(cls, qp: int) -> "QuantLevel":
        return cls(qp=qp, lam=lambda_of_qp(qp), qstep=qstep_of_qp(qp))


@dataclass(frozen=True)
class RefBuffer:
    """Reconstruction history exposed through the named reference slots.

    ``history`` holds the most recent reconstructions first (at most 6);
    ``keyframe`` is pinned for GOLDEN. Immutable once built for a frame.
    """

    history: tuple[np.ndarray, ...]
    keyframe: np.ndarray

    @classmethod
    def initial(cls, keyframe_recon: np.ndarray) -> "RefBuffer":
        return cls(history=(keyframe_recon,), keyframe=keyframe_recon)

    @property
    def slots(self) -> dict[ReferenceSlot, np.ndarray]:
        out = {ReferenceSlot.GOLDEN: self.keyframe}
        for slot, age in SLOT_AGES.items():
            if age <= len(self.history):
                out[slot] = self.history[age - 1]
        return out

    def present_slots(self) -> list[ReferenceSlot]:
        """Present slots in enumeration order (decision order is fixed)."""
        slots = self.slots
        return [s for s in ReferenceSlot if s in slots]


def advance_refs(buffer: RefBuffer, new_reconstruction: np.ndarray) -> RefBuffer:
    """Shift the history by one coded frame; GOLDEN stays on the keyframe."""
    if new_reconstruction.shape != buffer.keyframe.shape:
        raise ValueError("reconstruction dimensions differ from clip dimensions")
    history = (new_reconstruction,) + buffer.history[: max(SLOT_AGES.values()) - 1]
    return RefBuffer(history=history, keyframe=buffer.keyframe)


RECORD_CSV_HEADER = ["frame", "block_x", "block_y", "kind", "mode", "ref0", "ref1",
                     "mv0x", "mv0y", "mv1x", "mv1y", "rate_bits", "sse", "rd_cost"]


def _record_row(frame: int, rec: BlockRecord) -> list[str]:
    c = rec.choice
    if isinstance(c, Single):
        kind, mode = "S", c.mode.name
        ref0, ref1 = c.ref.name, ReferenceSlot.NONE.name
        mv0, mv1 = c.mv, ZERO_MV
    else:
        kind, mode = "C", c.mode.name
        ref0, ref1 = c.ref0.name, c.ref1.name
        mv0, mv1 = c.mv0, c.mv1
    return [str(frame), str(rec.block_x), str(rec.block_y), kind, mode, ref0, ref1,
            str(mv0.dx), str(mv0.dy), str(mv1.dx), str(mv1.dy),
            f"{rec.rate_bits:.6f}", str(rec.distortion_sse), f"{rec.rd_cost:.6f}"]


def write_record_csv(records_per_frame: list[list[BlockRecord]], fh: IO[str]) -> None:
    """Serialize the per-frame record stream; frame 0 (keyframe) has no rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_CSV_HEADER)
    for frame, records in enumerate(records_per_frame):
        for rec in records:
            w.writerow(_record_row(frame, rec))


def read_record_csv(fh: IO[str]) -> list[tuple[int, BlockRecord]]:
    """Parse a record CSV back into (frame, BlockRecord) pairs."""
    out = []
    for row in csv.DictReader(fh):
        mv0 = MotionVector(int(row["mv0x"]), int(row["mv0y"]))
        mv1 = MotionVector(int(row["mv1x"]), int(row["mv1y"]))
        if row["kind"] == "S":
            choice: ModeChoice = Single(SingleMode[row["mode"]],
                                        ReferenceSlot[row["ref0"]], mv0)
        else:
            choice = Compound(CompoundMode[row["mode"]], ReferenceSlot[row["ref0"]],
                              ReferenceSlot[row["ref1"]], mv0, mv1)
        rec = BlockRecord(block_x=int(row["block_x"]), block_y=int(row["block_y"]),
                          choice=choice, rd_cost=float(row["rd_cost"]),
                          rate_bits=float(row["rate_bits"]), distortion_sse=int(row["sse"]))
        out.append((int(row["frame"]), rec))
    return out


def exp_golomb_bits(value: int) -> int:
    """Signed order-0 exp-Golomb proxy length: 2*floor(log2(|v|+1)) + 1."""
    # bit_length keeps this exact integer math, no float log rounding
    return 2 * ((abs(value) + 1).bit_length() - 1) + 1


def mv_bits(mv: MotionVector, predictor: MotionVector) -> int:
    """Bits to code a motion vector differentially against its predictor."""
    return (exp_golomb_bits(mv.dx - predictor.dx)
            + exp_golomb_bits(mv.dy - predictor.dy))
