"""Y4M / raw I420 video ingest, emission, and synthetic clip generation.

Only 8-bit planar 4:2:0 content is handled. Luma is padded internally by
edge replication to a multiple of 16 so the fixed block grid tiles every
frame exactly; the logical (unpadded) size is what round-trips through
files and what all quality metrics are computed on.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

BLOCK = 16

SYNTHETIC_KINDS = ("global_pan", "two_layer_parallax", "noise", "static")

# layer velocities (dx, dy) in pixels/frame
PAN_VELOCITY = (2, 0)
PARALLAX_BG_VELOCITY = (1, 0)
PARALLAX_FG_VELOCITY = (3, 0)
# the top half of every 64-row period blends both layers 50/50
# (dissolve-style); no single motion-compensated copy can match a blend of
# two moving layers, but averaging two references halves the ghost error,
# so those block rows reward compound prediction at every qp
PARALLAX_BLEND_PERIOD = 4 * BLOCK


class Y4MError(ValueError):
    """Malformed or unsupported Y4M/raw input."""


def pad16(n: int) -> int:
    """Round up to the next multiple of 16."""
    return (n + BLOCK - 1) // BLOCK * BLOCK


@dataclass
class Frame:
    """One decoded picture: padded luma plus pass-through chroma.

    ``luma`` is padded to the clip's padded dimensions; ``cb``/``cr`` keep
    the logical half-resolution layout (ceil halves for odd sizes).
    """

    luma: np.ndarray
    cb: np.ndarray
    cr: np.ndarray


@dataclass
class VideoClip:
    """An ordered sequence of frames with shared logical dimensions."""

    width: int
    height: int
    frame_rate: Fraction
    frames: list[Frame] = field(default_factory=list)

    @property
    def padded_width(self) -> int:
        return pad16(self.width)

    @property
    def padded_height(self) -> int:
        return pad16(self.height)

    @property
    def blocks_x(self) -> int:
        return self.padded_width // BLOCK

    @property
    def blocks_y(self) -> int:
        return self.padded_height // BLOCK

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"bad clip dimensions {self.width}x{self.height}")
        if len(self.frames) < 2:
            raise ValueError(f"need >= 2 frames, got {len(self.frames)}")
        shape = (self.padded_height, self.padded_width)
        for i, f in enumerate(self.frames):
            if f.luma.shape != shape:
                raise ValueError(f"frame {i} luma shape {f.luma.shape} != padded {shape}")

    def limited(self, max_frames: int | None) -> "VideoClip":
        """A shallow copy truncated to at most ``max_frames`` frames."""
        if max_frames is None or max_frames >= len(self.frames):
            return self
        return VideoClip(self.width, self.height, self.frame_rate, self.frames[:max_frames])


def _pad_luma(plane: np.ndarray, width: int, height: int) -> np.ndarray:
    ph, pw = pad16(height), pad16(width)
    return np.pad(plane, ((0, ph - height), (0, pw - width)), mode="edge")


def _chroma_dims(width: int, height: int) -> tuple[int, int]:
    return (height + 1) // 2, (width + 1) // 2


def _make_frame(y: np.ndarray, cb: np.ndarray, cr: np.ndarray, width: int, height: int) -> Frame:
    return Frame(luma=_pad_luma(y, width, height), cb=cb, cr=cr)


def _parse_y4m_header(line: bytes, path: str) -> tuple[int, int, Fraction]:
    tokens = line.split(b" ")
    if tokens[0] != b"YUV4MPEG2":
        raise Y4MError(f"{path}: missing YUV4MPEG2 signature at byte 0")
    width = height = None
    rate = None
    for tok in tokens[1:]:
        if not tok:
            continue
        key, val = tok[:1], tok[1:]
        if key == b"W":
            width = int(val)
        elif key == b"H":
            height = int(val)
        elif key == b"F":
            num, den = val.split(b":")
            rate = Fraction(int(num), int(den))
        elif key == b"C":
            if not val.startswith(b"420"):
                raise Y4MError(f"{path}: non-4:2:0 chroma tag {tok.decode()!r} at byte 0")
        # I/A/X tokens carried but ignored
    if width is None or height is None or rate is None:
        raise Y4MError(f"{path}: header missing W/H/F tokens at byte 0")
    if width <= 0 or height <= 0:
        raise Y4MError(f"{path}: non-positive dimensions {width}x{height}")
    return width, height, rate


def read_y4m(path: str, max_frames: int | None = None) -> VideoClip:
    """Decode a Y4M file into a clip; frames beyond ``max_frames`` are dropped."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise Y4MError(f"{path}: malformed header, no newline found at byte 0")
    width, height, rate = _parse_y4m_header(data[:nl], path)

    ysize = width * height
    ch, cw = _chroma_dims(width, height)
    csize = ch * cw
    frames: list[Frame] = []
    pos = nl + 1
    while pos < len(data):
        if max_frames is not None and len(frames) >= max_frames:
            break
        if not data[pos:].startswith(b"FRAME"):
            raise Y4MError(f"{path}: expected FRAME marker at byte {pos}")
        mnl = data.find(b"\n", pos)
        if mnl < 0:
            raise Y4MError(f"{path}: unterminated FRAME marker at byte {pos}")
        payload = mnl + 1
        end = payload + ysize + 2 * csize
        if end > len(data):
            raise Y4MError(f"{path}: truncated frame payload at byte {payload}")
        y = np.frombuffer(data, np.uint8, ysize, payload).reshape(height, width)
        cb = np.frombuffer(data, np.uint8, csize, payload + ysize).reshape(ch, cw)
        cr = np.frombuffer(data, np.uint8, csize, payload + ysize + csize).reshape(ch, cw)
        frames.append(_make_frame(y, cb, cr, width, height))
        pos = end

    if len(frames) < 2:
        raise Y4MError(f"{path}: need >= 2 frames, got {len(frames)}")
    return VideoClip(width, height, rate, frames)


def read_raw_yuv(path: str, width: int, height: int, fps: Fraction,
                 max_frames: int | None = None) -> VideoClip:
    """Decode headerless planar I420 (.yuv); dimensions must be supplied."""
    if width <= 0 or height <= 0:
        raise Y4MError(f"{path}: non-positive dimensions {width}x{height}")
    with open(path, "rb") as fh:
        data = fh.read()
    ysize = width * height
    ch, cw = _chroma_dims(width, height)
    fsize = ysize + 2 * ch * cw
    if len(data) % fsize:
        raise Y4MError(f"{path}: truncated frame payload at byte {len(data) - len(data) % fsize}")
    n = len(data) // fsize
    if max_frames is not None:
        n = min(n, max_frames)
    frames = []
    for i in range(n):
        base = i * fsize
        y = np.frombuffer(data, np.uint8, ysize, base).reshape(height, width)
        cb = np.frombuffer(data, np.uint8, ch * cw, base + ysize).reshape(ch, cw)
        cr = np.frombuffer(data, np.uint8, ch * cw, base + ysize + ch * cw).reshape(ch, cw)
        frames.append(_make_frame(y, cb, cr, width, height))
    if n < 2:
        raise Y4MError(f"{path}: need >= 2 frames, got {n}")
    return VideoClip(width, height, fps, frames)


def write_y4m(clip: VideoClip, path: str) -> None:
    """Emit the logical (unpadded) samples; read_y4m(write_y4m(c)) is lossless."""
    clip.validate()
    header = (f"YUV4MPEG2 W{clip.width} H{clip.height} "
              f"F{clip.frame_rate.numerator}:{clip.frame_rate.denominator} C420\n")
    ch, cw = _chroma_dims(clip.width, clip.height)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for f in clip.frames:
            fh.write(b"FRAME\n")
            fh.write(np.ascontiguousarray(f.luma[:clip.height, :clip.width]).tobytes())
            fh.write(np.ascontiguousarray(f.cb[:ch, :cw]).tobytes())
            fh.write(np.ascontiguousarray(f.cr[:ch, :cw]).tobytes())


def _sliding_layer(rng: np.random.Generator, height: int, width: int,
                   n_frames: int, velocity: tuple[int, int],
                   lo: int = 0, hi: int = 256) -> list[np.ndarray]:
    """Frames of a texture translating rigidly at ``velocity`` px/frame.

    frame t column c equals frame 0 column c - vx*t (same for rows), so
    content visibly moves by +velocity each frame.
    """
    vx, vy = velocity
    mx, my = abs(vx) * (n_frames - 1), abs(vy) * (n_frames - 1)
    texture = rng.integers(lo, hi, (height + my, width + mx), dtype=np.int32).astype(np.uint8)
    x0 = mx if vx > 0 else 0
    y0 = my if vy > 0 else 0
    out = []
    for t in range(n_frames):
        ys, xs = y0 - vy * t, x0 - vx * t
        out.append(texture[ys:ys + height, xs:xs + width].copy())
    return out


def _parallax_fg_rows(height: int) -> np.ndarray:
    """Rows carrying the blended foreground: the first two block rows of
    every 64-row period; the other two stay pure background."""
    return np.flatnonzero(np.arange(height) % PARALLAX_BLEND_PERIOD < PARALLAX_BLEND_PERIOD // 2)


def gen_synthetic(kind: str, width: int, height: int, n_frames: int, seed: int) -> VideoClip:
    """Deterministic test clip of one of the SYNTHETIC_KINDS.

    global_pan: one texture translating at PAN_VELOCITY.
    two_layer_parallax: background and a horizontal foreground band moving
        at different velocities; the band additionally carries fresh
        per-frame noise, which rewards averaging two references.
    noise: i.i.d. uniform samples every frame.
    static: frame 0 repeated.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if width < 32 or height < 32:
        raise ValueError(f"dimensions must be >= 32, got {width}x{height}")
    if n_frames < 2:
        raise ValueError(f"need >= 2 frames, got {n_frames}")

    rng = np.random.default_rng(seed)
    if kind == "static":
        y0 = rng.integers(0, 256, (height, width), dtype=np.int32).astype(np.uint8)
        lumas = [y0.copy() for _ in range(n_frames)]
    elif kind == "noise":
        lumas = [rng.integers(0, 256, (height, width), dtype=np.int32).astype(np.uint8)
                 for _ in range(n_frames)]
    elif kind == "global_pan":
        lumas = _sliding_layer(rng, height, width, n_frames, PAN_VELOCITY)
    else:  # two_layer_parallax
        bg = _sliding_layer(rng, height, width, n_frames, PARALLAX_BG_VELOCITY)
        fg = _sliding_layer(rng, height, width, n_frames, PARALLAX_FG_VELOCITY)
        fg_rows = _parallax_fg_rows(height)
        lumas = []
        for t in range(n_frames):
            y = bg[t].astype(np.int32)
            # same rounding as the compound predictor: floor((a + b + 1) / 2)
            y[fg_rows] = (y[fg_rows] + fg[t][fg_rows].astype(np.int32) + 1) >> 1
            lumas.append(y.astype(np.uint8))

    ch, cw = _chroma_dims(width, height)
    flat = np.full((ch, cw), 128, dtype=np.uint8)
    frames = [_make_frame(y, flat.copy(), flat.copy(), width, height) for y in lumas]
    return VideoClip(width, height, Fraction(30, 1), frames)


def parse_synth_spec(spec: str) -> tuple[str, VideoClip]:
    """Parse ``synth:<kind>:<WxH>:<frames>:<seed>`` into (clip_id, clip)."""
    parts = spec.split(":")
    if len(parts) != 5 or parts[0] != "synth":
        raise ValueError(f"bad synthetic spec {spec!r}, "
                         "expected synth:<kind>:<WxH>:<frames>:<seed>")
    kind, size, n_frames, seed = parts[1], parts[2], int(parts[3]), int(parts[4])
    w, h = (int(v) for v in size.lower().split("x"))
    clip_id = f"{kind}-{w}x{h}-f{n_frames}-s{seed}"
    return clip_id, gen_synthetic(kind, w, h, n_frames, seed)


def load_clip(path_or_spec: str, width: int | None = None, height: int | None = None,
              fps: Fraction | None = None, max_frames: int | None = None) -> tuple[str, VideoClip]:
    """Load a clip from a Y4M/raw path or an inline ``synth:`` spec."""
    if path_or_spec.startswith("synth:"):
        clip_id, clip = parse_synth_spec(path_or_spec)
        return clip_id, clip.limited(max_frames)
    stem = os.path.splitext(os.path.basename(path_or_spec))[0]
    if path_or_spec.endswith(".yuv"):
        if width is None or height is None:
            raise ValueError("raw .yuv input requires --width and --height")
        return stem, read_raw_yuv(path_or_spec, width, height, fps or Fraction(30, 1), max_frames)
    return stem, read_y4m(path_or_spec, max_frames)
