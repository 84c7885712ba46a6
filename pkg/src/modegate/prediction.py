"""Motion-vector candidates, motion search, and block prediction.

Motion is full-pel only. A MotionVector (dx, dy) is the displacement of
content from a reference frame to the current one, so compensation for a
block at (x0, y0) samples the reference at (y0 - dy, x0 - dx); taps that
fall outside the reference are edge-replicated.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import (BLOCK, ModeChoice, MotionVector, RefBuffer,
                    ReferenceSlot, Single, ZERO_MV)

GLOBAL_MV_RANGE = 8
SEARCH_RANGE = 8
GLOBAL_DECIMATION = 4


class MVCandidateSet:
    """Per-slot NEARESTMV/NEARMV candidates harvested from coded neighbors.

    nearest is the first contribution in left, top, top-left order from a
    neighbor that used the slot; near is the next distinct contribution.
    Slots nobody referenced fall back to (0, 0).
    """

    def __init__(self) -> None:
        self._slots: dict[ReferenceSlot, tuple[MotionVector, MotionVector]] = {}

    def nearest(self, slot: ReferenceSlot) -> MotionVector:
        return self._slots.get(slot, (ZERO_MV, ZERO_MV))[0]

    def near(self, slot: ReferenceSlot) -> MotionVector:
        return self._slots.get(slot, (ZERO_MV, ZERO_MV))[1]

    def _set(self, slot: ReferenceSlot, contributions: list[MotionVector]) -> None:
        nearest = contributions[0]
        near = next((mv for mv in contributions[1:] if mv != nearest), ZERO_MV)
        self._slots[slot] = (nearest, near)


def _contributions(record) -> list[tuple[ReferenceSlot, MotionVector]]:
    c = record.choice
    if isinstance(c, Single):
        return [(c.ref, c.mv)]
    return [(c.ref0, c.mv0), (c.ref1, c.mv1)]


def build_candidates(left=None, top=None, top_left=None) -> MVCandidateSet:
    """Collect MV candidates from the left, top and top-left BlockRecords."""
    per_slot: dict[ReferenceSlot, list[MotionVector]] = {}
    for rec in (left, top, top_left):
        if rec is None:
            continue
        for slot, mv in _contributions(rec):
            per_slot.setdefault(slot, []).append(mv)
    cands = MVCandidateSet()
    for slot, mvs in per_slot.items():
        cands._set(slot, mvs)
    return cands


def _tie_break_argmin(cost: np.ndarray, dxs: np.ndarray, dys: np.ndarray) -> int:
    """Index of minimal cost; ties prefer small |dx|+|dy|, then dy, then dx."""
    order = np.lexsort((dxs, dys, np.abs(dxs) + np.abs(dys), cost))
    return int(order[0])


def _gather(ref: np.ndarray, y0: int, x0: int, h: int, w: int) -> np.ndarray:
    """Read an h*w window at (y0, x0) with edge replication."""
    rows = np.clip(np.arange(y0, y0 + h), 0, ref.shape[0] - 1)
    cols = np.clip(np.arange(x0, x0 + w), 0, ref.shape[1] - 1)
    return ref[np.ix_(rows, cols)]


def estimate_global_motion(current: np.ndarray, reference: np.ndarray) -> MotionVector:
    """Whole-frame translation minimizing SAD on a 4x-decimated grid.

    The search covers [-8, 8]^2 full-pel offsets; deterministic tie-breaks
    keep the result reproducible on flat content.
    """
    if current.shape != reference.shape:
        raise ValueError("frame dimensions differ")
    r = GLOBAL_MV_RANGE
    d = GLOBAL_DECIMATION
    cur = current[::d, ::d].astype(np.int32)
    gy = np.arange(0, current.shape[0], d)
    gx = np.arange(0, current.shape[1], d)
    cands = np.arange(-r, r + 1)
    costs = np.empty((2 * r + 1) ** 2, dtype=np.int64)
    dxs = np.empty_like(costs)
    dys = np.empty_like(costs)
    i = 0
    for dy in cands:
        rows = np.clip(gy - dy, 0, reference.shape[0] - 1)
        for dx in cands:
            cols = np.clip(gx - dx, 0, reference.shape[1] - 1)
            sad = np.abs(cur - reference[np.ix_(rows, cols)].astype(np.int32)).sum()
            costs[i], dxs[i], dys[i] = sad, dx, dy
            i += 1
    best = _tie_break_argmin(costs.astype(np.float64), dxs, dys)
    return MotionVector(int(dxs[best]), int(dys[best]))


def motion_search(current_block: np.ndarray, reference: np.ndarray,
                  block_pos: tuple[int, int], start: MotionVector,
                  search_range: int = SEARCH_RANGE, lam_mv: float = 0.0,
                  mv_predictor: MotionVector = ZERO_MV) -> MotionVector:
    """Full search of the (2r+1)^2 window around ``start``.

    Minimizes SAD + lam_mv * differential MV bits against ``mv_predictor``.
    The start vector is clamped so its magnitude never exceeds the frame
    dimension; out-of-frame taps are edge-replicated.
    """
    bx, by = block_pos
    h, w = reference.shape
    r = search_range
    start = MotionVector(int(np.clip(start.dx, -w, w)), int(np.clip(start.dy, -h, h)))

    # one gathered region holds every candidate block of the window
    region = _gather(reference, by - start.dy - r, bx - start.dx - r,
                     BLOCK + 2 * r, BLOCK + 2 * r).astype(np.int16)
    windows = sliding_window_view(region, (BLOCK, BLOCK))
    sad = np.abs(windows.astype(np.int32)
                 - current_block.astype(np.int32)).sum(axis=(2, 3))

    # window row i corresponds to dy = start.dy + r - i (larger dy shifts
    # the source upward in the reference), same for columns
    offs = np.arange(r, -r - 1, -1)
    dys = (start.dy + offs)[:, None] + np.zeros_like(offs)[None, :]
    dxs = np.zeros_like(offs)[:, None] + (start.dx + offs)[None, :]

    bits = (_golomb_bits_array(dxs - mv_predictor.dx)
            + _golomb_bits_array(dys - mv_predictor.dy))
    cost = sad.astype(np.float64) + lam_mv * bits
    best = _tie_break_argmin(cost.ravel(), dxs.ravel(), dys.ravel())
    return MotionVector(int(dxs.ravel()[best]), int(dys.ravel()[best]))


def _golomb_bits_array(d: np.ndarray) -> np.ndarray:
    """Vectorized 2*floor(log2(|d|+1)) + 1; frexp keeps it exact for ints."""
    _, exp = np.frexp((np.abs(d) + 1).astype(np.float64))
    return 2 * (exp - 1) + 1


def mc_block(reference: np.ndarray, block_pos: tuple[int, int], mv: MotionVector) -> np.ndarray:
    """Motion-compensated 16x16 copy at the block's position minus mv."""
    bx, by = block_pos
    return _gather(reference, by - mv.dy, bx - mv.dx, BLOCK, BLOCK)


def predict(choice: ModeChoice, refs: RefBuffer, block_pos: tuple[int, int]) -> np.ndarray:
    """Form the 16x16 prediction for a mode choice; uint8 output."""
    slots = refs.slots
    if isinstance(choice, Single):
        if choice.ref not in slots:
            raise ValueError(f"reference slot {choice.ref.name} absent")
        return mc_block(slots[choice.ref], block_pos, choice.mv)
    if choice.ref0 not in slots or choice.ref1 not in slots:
        raise ValueError("compound reference slot absent")
    p0 = mc_block(slots[choice.ref0], block_pos, choice.mv0).astype(np.uint16)
    p1 = mc_block(slots[choice.ref1], block_pos, choice.mv1).astype(np.uint16)
    return ((p0 + p1 + 1) >> 1).astype(np.uint8)


def sse(a: np.ndarray, b: np.ndarray) -> int:
    """Sum of squared sample differences."""
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    d = a.astype(np.int64) - b.astype(np.int64)
    return int((d * d).sum())
