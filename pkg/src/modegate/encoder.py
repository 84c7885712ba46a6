"""Per-block rate-distortion mode decision and whole-clip encoding.

Three strategies share one evaluation path: Exhaustive tests every single
and compound option, SkipCompound never tests compound modes, and Gated
consults a trained classifier per block to decide whether the compound
search is worth running. Candidate order is fixed (singles before
compounds, then mode index, then reference index) so exact RD-cost ties
resolve deterministically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Optional, Union

import numpy as np

from . import features as feat
from .codec import (BLOCK, BlockRecord, Compound, COMPOUND_COMPONENTS,
                    COMPOUND_PRIMARY_SLOTS, CompoundMode, FRAME_OVERHEAD_BITS,
                    ModeChoice, MotionVector, QuantLevel, RefBuffer,
                    ReferenceSlot, Single, SingleMode, advance_refs, mv_bits)
from .metrics import psnr_from_mse
from .prediction import (MVCandidateSet, build_candidates,
                         estimate_global_motion, mc_block, motion_search, sse)
from .video import VideoClip

ZERO_COEFF_BITS = 0.02  # flat run-flag proxy per zero quantized coefficient


@dataclass(frozen=True)
class Exhaustive:
    name = "exhaustive"


@dataclass(frozen=True)
class SkipCompound:
    name = "skip"


@dataclass(frozen=True)
class Gated:
    """Compound search runs only for blocks the model classifies as Class 1."""

    model: object  # trained gate with classify_one(features) -> {0, 1}
    name = "gated"


Strategy = Union[Exhaustive, SkipCompound, Gated]


def quantize_residual(residual: np.ndarray, qstep: float) -> tuple[np.ndarray, np.ndarray]:
    """Deadzone quantizer: q = sign(r)*floor(|r|/qstep), dequant = q*round(qstep)."""
    if qstep <= 0:
        raise ValueError("qstep must be positive")
    q = (np.sign(residual) * np.floor(np.abs(residual) / qstep)).astype(np.int32)
    return q, q * int(round(qstep))


def residual_bits(quantized: np.ndarray) -> float:
    """Exp-Golomb proxy for nonzero coefficients plus run flags for zeros."""
    nz = quantized[quantized != 0]
    _, exp = np.frexp((np.abs(nz) + 1).astype(np.float64))
    bits = int((2 * (exp - 1) + 1).sum())
    return bits + ZERO_COEFF_BITS * (quantized.size - nz.size)


def _component_mv_bits(source: str, mv: MotionVector, nearest: MotionVector) -> int:
    # only NEWMV components spend bits; candidate-reuse modes are free
    return mv_bits(mv, nearest) if source == "new" else 0


def rate_of_block(choice: ModeChoice, quantized: np.ndarray,
                  candidates: MVCandidateSet) -> float:
    """Rate model: flat mode/ref signaling + differential MV bits + residual."""
    if isinstance(choice, Single):
        mode_bits = 3
        src = "new" if choice.mode == SingleMode.NEWMV else "reuse"
        mvb = _component_mv_bits(src, choice.mv, candidates.nearest(choice.ref))
    else:
        mode_bits = 5
        s0, s1 = COMPOUND_COMPONENTS[choice.mode]
        mvb = (_component_mv_bits(s0, choice.mv0, candidates.nearest(choice.ref0))
               + _component_mv_bits(s1, choice.mv1, candidates.nearest(choice.ref1)))
    return mode_bits + mvb + residual_bits(quantized)


class _BlockContext:
    """Caches per-block motion searches and single-reference predictions."""

    def __init__(self, source_block: np.ndarray, block_pos: tuple[int, int],
                 slots: dict[ReferenceSlot, np.ndarray],
                 candidates: MVCandidateSet,
                 gmv: dict[ReferenceSlot, MotionVector], q: QuantLevel):
        self.source = source_block.astype(np.int32)
        self.source_u8 = source_block
        self.pos = block_pos
        self.slots = slots
        self.candidates = candidates
        self.gmv = gmv
        self.q = q
        self.lam_mv = sqrt(q.lam)
        self._new_mv: dict[ReferenceSlot, MotionVector] = {}
        self._preds: dict[tuple[ReferenceSlot, MotionVector], np.ndarray] = {}

    def new_mv(self, slot: ReferenceSlot) -> MotionVector:
        mv = self._new_mv.get(slot)
        if mv is None:
            nearest = self.candidates.nearest(slot)
            mv = motion_search(self.source_u8, self.slots[slot], self.pos,
                               start=nearest, lam_mv=self.lam_mv, mv_predictor=nearest)
            self._new_mv[slot] = mv
        return mv

    def component_mv(self, source: str, slot: ReferenceSlot) -> MotionVector:
        if source == "nearest":
            return self.candidates.nearest(slot)
        if source == "near":
            return self.candidates.near(slot)
        if source == "global":
            return self.gmv[slot]
        return self.new_mv(slot)

    def single_pred(self, slot: ReferenceSlot, mv: MotionVector) -> np.ndarray:
        key = (slot, mv)
        pred = self._preds.get(key)
        if pred is None:
            pred = mc_block(self.slots[slot], self.pos, mv)
            self._preds[key] = pred
        return pred

    def evaluate(self, choice: ModeChoice, pred: np.ndarray) -> tuple[float, float, int, np.ndarray]:
        residual = self.source - pred.astype(np.int32)
        quantized, dequant = quantize_residual(residual, self.q.qstep)
        recon = np.clip(pred.astype(np.int32) + dequant, 0, 255).astype(np.uint8)
        dist = sse(self.source_u8, recon)
        rate = rate_of_block(choice, quantized, self.candidates)
        return dist + self.q.lam * rate, rate, dist, recon


def code_block(block_pos: tuple[int, int], source_block: np.ndarray,
               refs: RefBuffer, candidates: MVCandidateSet,
               gmv: dict[ReferenceSlot, MotionVector], q: QuantLevel,
               test_compound: bool) -> tuple[BlockRecord, np.ndarray]:
    """Pick the minimum-RD-cost mode for one block.

    Returns the record and the block reconstruction. Ties prefer Single
    over Compound, then the lower mode index, then lower reference index,
    which the strict-improvement scan over the fixed candidate order
    implements.
    """
    ctx = _BlockContext(source_block, block_pos, refs.slots, candidates, gmv, q)
    present = refs.present_slots()
    bx, by = block_pos

    best: Optional[tuple[float, ModeChoice, float, int, np.ndarray]] = None
    for mode in SingleMode:
        src = {"NEARESTMV": "nearest", "NEARMV": "near",
               "NEWMV": "new", "GLOBALMV": "global"}[mode.name]
        for ref in present:
            mv = ctx.component_mv(src, ref)
            choice = Single(mode, ref, mv)
            cost, rate, dist, recon = ctx.evaluate(choice, ctx.single_pred(ref, mv))
            if best is None or cost < best[0]:
                best = (cost, choice, rate, dist, recon)

    if test_compound:
        for mode in CompoundMode:
            s0, s1 = COMPOUND_COMPONENTS[mode]
            for ref0 in COMPOUND_PRIMARY_SLOTS:
                if ref0 not in present:
                    continue
                for ref1 in present:
                    if ref1 == ref0:
                        continue
                    mv0 = ctx.component_mv(s0, ref0)
                    mv1 = ctx.component_mv(s1, ref1)
                    choice = Compound(mode, ref0, ref1, mv0, mv1)
                    p0 = ctx.single_pred(ref0, mv0).astype(np.uint16)
                    p1 = ctx.single_pred(ref1, mv1).astype(np.uint16)
                    pred = ((p0 + p1 + 1) >> 1).astype(np.uint8)
                    cost, rate, dist, recon = ctx.evaluate(choice, pred)
                    if cost < best[0]:
                        best = (cost, choice, rate, dist, recon)

    cost, choice, rate, dist, recon = best
    rec = BlockRecord(block_x=bx // BLOCK, block_y=by // BLOCK, choice=choice,
                      rd_cost=cost, rate_bits=rate, distortion_sse=dist)
    return rec, recon


@dataclass
class EncodeReport:
    """Everything one (clip, qp, strategy) encode produces besides files."""

    strategy: str
    qp: int
    width: int
    height: int
    fps: Fraction
    frame_bits: list[float] = field(default_factory=list)
    frame_sse: list[int] = field(default_factory=list)
    records: list[list[BlockRecord]] = field(default_factory=list)
    gate_open: Optional[list[list[bool]]] = None
    wall_time_s: float = 0.0
    recon_lumas: Optional[list[np.ndarray]] = None

    @property
    def n_frames(self) -> int:
        return len(self.frame_bits)

    @property
    def total_bits(self) -> float:
        return float(sum(self.frame_bits))

    @property
    def rate_bps(self) -> float:
        return self.total_bits * float(self.fps) / self.n_frames

    @property
    def psnr_db(self) -> float:
        mse = sum(self.frame_sse) / (self.n_frames * self.width * self.height)
        return psnr_from_mse(mse)

    def mode_counts(self) -> tuple[int, int]:
        srfpm = sum(1 for frame in self.records for r in frame if not r.is_compound)
        crfpm = sum(1 for frame in self.records for r in frame if r.is_compound)
        return srfpm, crfpm

    def all_records(self) -> list[BlockRecord]:
        return [r for frame in self.records for r in frame]


def encode_clip(clip: VideoClip, q: QuantLevel, strategy: Strategy,
                keep_recon: bool = False) -> EncodeReport:
    """Code frame 0 as a keyframe and every later frame in block raster order.

    Wall time covers the per-frame motion/mode search work only, not clip
    I/O or report assembly.
    """
    clip.validate()
    gated = isinstance(strategy, Gated)
    report = EncodeReport(strategy=strategy.name, qp=q.qp, width=clip.width,
                          height=clip.height, fps=clip.frame_rate,
                          gate_open=[] if gated else None,
                          recon_lumas=[] if keep_recon else None)

    lumas = [f.luma for f in clip.frames]
    logical = (slice(0, clip.height), slice(0, clip.width))

    # keyframe: reconstruction is the source, no prediction work
    recon0 = lumas[0].copy()
    report.frame_bits.append(FRAME_OVERHEAD_BITS)
    report.frame_sse.append(0)
    report.records.append([])
    if gated:
        report.gate_open.append([])
    if keep_recon:
        report.recon_lumas.append(recon0)
    refs = RefBuffer.initial(recon0)

    nbx = clip.blocks_x
    nby = clip.blocks_y
    total_time = 0.0

    for t in range(1, len(lumas)):
        cur = lumas[t]
        t0 = time.perf_counter()

        slots = refs.slots
        gmv = {slot: estimate_global_motion(cur, ref) for slot, ref in slots.items()}

        grid: dict[tuple[int, int], BlockRecord] = {}
        frame_records: list[BlockRecord] = []
        frame_gates: list[bool] = []
        recon = np.empty_like(cur)
        bits = FRAME_OVERHEAD_BITS
        for byi in range(nby):
            for bxi in range(nbx):
                left = grid.get((bxi - 1, byi))
                top = grid.get((bxi, byi - 1))
                top_left = grid.get((bxi - 1, byi - 1))
                candidates = build_candidates(left, top, top_left)
                if isinstance(strategy, Exhaustive):
                    test_compound = True
                elif isinstance(strategy, SkipCompound):
                    test_compound = False
                else:
                    fv = feat.extract_features(left, top)
                    test_compound = strategy.model.classify_one(fv) == 1
                pos = (bxi * BLOCK, byi * BLOCK)
                src = cur[pos[1]:pos[1] + BLOCK, pos[0]:pos[0] + BLOCK]
                rec, block_recon = code_block(pos, src, refs, candidates, gmv, q,
                                              test_compound)
                grid[(bxi, byi)] = rec
                frame_records.append(rec)
                if gated:
                    frame_gates.append(test_compound)
                recon[pos[1]:pos[1] + BLOCK, pos[0]:pos[0] + BLOCK] = block_recon
                bits += rec.rate_bits

        total_time += time.perf_counter() - t0

        report.frame_bits.append(bits)
        report.frame_sse.append(sse(cur[logical], recon[logical]))
        report.records.append(frame_records)
        if gated:
            report.gate_open.append(frame_gates)
        if keep_recon:
            report.recon_lumas.append(recon)
        refs = advance_refs(refs, recon)

    report.wall_time_s = total_time
    return report
