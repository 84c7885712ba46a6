"""Per-block gate features, ground-truth labels, and training datasets.

Each block contributes four categorical features read off its already
coded left and top neighbors:

    f1  second reference slot of the left block (7 = none/absent)
    f2  prediction mode id of the left block (12 = absent)
    f3  second reference slot of the top block
    f4  prediction mode id of the top block

Mode ids: SingleMode 0-3, CompoundMode 4-11, absent 12. The label is
Class 0 when the exhaustive search picked a single-reference mode and
Class 1 when it picked a compound mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, NamedTuple, Optional

from .codec import BlockRecord, MODE_ID_ABSENT, QuantLevel, ReferenceSlot, mode_id

CLASS_SRFPM_ONLY = 0
CLASS_ALL_MODES = 1

DATASET_CSV_HEADER = ["clip", "qp", "frame", "bx", "by", "f1", "f2", "f3", "f4", "label"]


class FeatureVector(NamedTuple):
    f1: int
    f2: int
    f3: int
    f4: int


def _neighbor_features(record: Optional[BlockRecord]) -> tuple[int, int]:
    if record is None:
        return int(ReferenceSlot.NONE), MODE_ID_ABSENT
    return int(record.second_ref), mode_id(record.choice)


def extract_features(left: Optional[BlockRecord], top: Optional[BlockRecord]) -> FeatureVector:
    """Features of the current block from its coded neighbors (no lookahead)."""
    f1, f2 = _neighbor_features(left)
    f3, f4 = _neighbor_features(top)
    return FeatureVector(f1, f2, f3, f4)


def label_block(record: BlockRecord) -> int:
    """Class 0 iff the chosen mode is single-reference."""
    return CLASS_ALL_MODES if record.is_compound else CLASS_SRFPM_ONLY


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: int
    clip_id: str
    qp: int
    frame: int
    block_x: int
    block_y: int

    def sort_key(self):
        return (self.clip_id, self.qp, self.frame, self.block_y, self.block_x)


def samples_from_records(clip_id: str, qp: int,
                         records_per_frame: list[list[BlockRecord]]) -> list[LabeledSample]:
    """Re-derive features and labels from a coded record stream.

    The neighbor records any block saw while coding are all in the stream,
    so the dataset is fully auditable from the record CSV alone.
    """
    out = []
    for frame, records in enumerate(records_per_frame):
        grid = {(r.block_x, r.block_y): r for r in records}
        for rec in records:
            left = grid.get((rec.block_x - 1, rec.block_y))
            top = grid.get((rec.block_x, rec.block_y - 1))
            out.append(LabeledSample(
                features=extract_features(left, top),
                label=label_block(rec),
                clip_id=clip_id, qp=qp, frame=frame,
                block_x=rec.block_x, block_y=rec.block_y))
    return out


def harvest(clips: list[tuple[str, "VideoClip"]], qps: list[int],
            frame_limit: int = 20) -> list[LabeledSample]:
    """Exhaustive encodes over the clip/qp grid, one sample per inter block.

    Output is sorted by (clip, qp, frame, block) so assembly order never
    depends on scheduling.
    """
    from .encoder import Exhaustive, encode_clip  # deferred: encoder uses this module

    if not clips:
        raise ValueError("need at least one clip")
    samples: list[LabeledSample] = []
    for clip_id, clip in clips:
        limited = clip.limited(frame_limit)
        for qp in qps:
            report = encode_clip(limited, QuantLevel.from_qp(qp), Exhaustive())
            samples.extend(samples_from_records(clip_id, qp, report.records))
    samples.sort(key=LabeledSample.sort_key)
    return samples


def write_dataset_csv(samples: list[LabeledSample], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DATASET_CSV_HEADER)
    for s in samples:
        w.writerow([s.clip_id, s.qp, s.frame, s.block_x, s.block_y,
                    s.features.f1, s.features.f2, s.features.f3, s.features.f4,
                    s.label])


def read_dataset_csv(fh: IO[str]) -> list[LabeledSample]:
    samples = []
    for row in csv.DictReader(fh):
        samples.append(LabeledSample(
            features=FeatureVector(int(row["f1"]), int(row["f2"]),
                                   int(row["f3"]), int(row["f4"])),
            label=int(row["label"]),
            clip_id=row["clip"], qp=int(row["qp"]), frame=int(row["frame"]),
            block_x=int(row["bx"]), block_y=int(row["by"])))
    return samples
