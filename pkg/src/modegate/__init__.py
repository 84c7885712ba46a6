"""Block-based inter-prediction encoder harness with a decision-tree gate
that decides, per block, whether compound-reference modes are worth testing.
"""

from .codec import (BlockRecord, Compound, CompoundMode, ModeChoice,
                    MotionVector, QuantLevel, ReferenceSlot, Single,
                    SingleMode, lambda_of_qp, qstep_of_qp)
from .encoder import EncodeReport, Exhaustive, Gated, SkipCompound, encode_clip
from .features import FeatureVector, LabeledSample, extract_features, harvest, label_block
from .gate import GateClassifier, balanced_sample, constant_gate, gini, load_model, save_model, train_gate
from .metrics import RDPoint, bd_br, mode_share, psnr, time_saving
from .video import Frame, VideoClip, gen_synthetic, read_y4m, write_y4m

__version__ = "0.1.0"

__all__ = [
    "BlockRecord", "Compound", "CompoundMode", "EncodeReport", "Exhaustive",
    "FeatureVector", "Frame", "GateClassifier", "Gated", "LabeledSample",
    "ModeChoice", "MotionVector", "QuantLevel", "RDPoint", "ReferenceSlot",
    "Single", "SingleMode", "SkipCompound", "VideoClip", "balanced_sample",
    "bd_br", "constant_gate", "encode_clip", "extract_features",
    "gen_synthetic", "gini", "harvest", "label_block", "lambda_of_qp",
    "load_model", "mode_share", "psnr", "qstep_of_qp", "read_y4m",
    "save_model", "time_saving", "train_gate", "write_y4m",
]
