"""Evaluation metrics: time saving, PSNR, Bjøntegaard delta bitrate, mode share.

BD-BR follows the classical formulation: fit a cubic polynomial of
log10(rate) against PSNR to each four-point curve, integrate both over
the common PSNR interval, and convert the mean log-rate difference into
a percentage.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

PSNR_CAP_DB = 99.0
MIN_PSNR_OVERLAP_DB = 0.5


def time_saving(t_anchor: float, t_modified: float) -> float:
    """Percent encoding-time reduction of the modified encoder vs the anchor."""
    if t_anchor <= 0:
        raise ValueError("anchor time must be positive")
    return (1.0 - t_modified / t_anchor) * 100.0


def psnr_from_mse(mse: float) -> float:
    if mse == 0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(255.0 ** 2 / mse)


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Luma PSNR in dB over the logical region; lossless is capped at 99 dB."""
    if reference.shape != test.shape:
        raise ValueError("dimension mismatch")
    diff = reference.astype(np.float64) - test.astype(np.float64)
    return psnr_from_mse(float((diff * diff).mean()))


class RDPoint(NamedTuple):
    rate: float  # bits/second
    psnr: float  # dB


def make_curve(points: Sequence[RDPoint]) -> list[RDPoint]:
    """Validate and sort a 4-point RD curve by ascending rate.

    Exact rate ties are perturbed by 1e-9 relative so log-rates stay
    distinct; a non-increasing PSNR after sorting is rejected.
    """
    if len(points) != 4:
        raise ValueError(f"curve needs exactly 4 points, got {len(points)}")
    if any(p.rate <= 0 for p in points):
        raise ValueError("rates must be positive")
    if any(not math.isfinite(p.psnr) for p in points):
        raise ValueError("psnr must be finite")
    pts = sorted(points, key=lambda p: p.rate)
    out = [pts[0]]
    for p in pts[1:]:
        rate = p.rate
        if rate <= out[-1].rate:
            rate = out[-1].rate * (1.0 + 1e-9)
        out.append(RDPoint(rate, p.psnr))
    for a, b in zip(out, out[1:]):
        if b.psnr <= a.psnr:
            raise ValueError("non-monotone curve after sorting by rate")
    return out


def _log_rate_poly(curve: list[RDPoint]) -> np.ndarray:
    """Cubic interpolant coefficients of log10(rate) as a function of PSNR."""
    x = np.array([p.psnr for p in curve])
    y = np.log10([p.rate for p in curve])
    vandermonde = np.vander(x, 4)
    return np.linalg.solve(vandermonde, y)


def bd_br(anchor: Sequence[RDPoint], test: Sequence[RDPoint]) -> float:
    """Average percent rate difference of test vs anchor at equal quality."""
    ca, ct = make_curve(anchor), make_curve(test)
    lo = max(ca[0].psnr, ct[0].psnr)
    hi = min(ca[-1].psnr, ct[-1].psnr)
    if hi - lo < MIN_PSNR_OVERLAP_DB:
        raise ValueError(f"insufficient PSNR overlap ({hi - lo:.3f} dB)")
    pa = np.polyint(_log_rate_poly(ca))
    pt = np.polyint(_log_rate_poly(ct))
    avg_diff = ((np.polyval(pt, hi) - np.polyval(pt, lo))
                - (np.polyval(pa, hi) - np.polyval(pa, lo))) / (hi - lo)
    return (10.0 ** avg_diff - 1.0) * 100.0


def mode_share(records: Sequence) -> tuple[float, float]:
    """SRFPM/CRFPM percentages over a BlockRecord stream; sums to 100."""
    if not records:
        raise ValueError("empty record stream")
    crfpm = sum(1 for r in records if r.is_compound)
    crfpm_pct = 100.0 * crfpm / len(records)
    return 100.0 - crfpm_pct, crfpm_pct
