"""Pure receiver-side math: interference degree, SNIR, and the decoding test.

A burst's aggregate interference degree x sums the fractional temporal
overlap of every interferer (0.5 * n for n half-overlapping bursts), so x
can exceed 1 when interferers pile up. Decoding succeeds either when the
burst is overlap-free (no FEC) or when SNIR = SNR / (x * SNR + 1) clears
the Shannon-bound threshold 2^R - 1.
"""
from __future__ import annotations

from typing import Iterable

from .model import Burst, ChannelParams, FecMode

# overlap below this fraction counts as "no overlap"; guards float noise in
# continuous placements, the no-FEC rule itself is categorical
EPS_ZERO = 1e-12


def overlap_fraction(a: Burst, b: Burst, params: ChannelParams) -> float:
    """Fraction of burst a's duration overlapped by burst b (symmetric)."""
    if params.is_slotted:
        sa = a.slot if a.slot is not None else round(a.start / params.burst_duration)
        sb = b.slot if b.slot is not None else round(b.start / params.burst_duration)
        return 1.0 if sa == sb else 0.0
    tau = params.burst_duration
    overlap = min(a.start, b.start) + tau - max(a.start, b.start)
    return max(0.0, overlap / tau)


def interference_degree(target: Burst, others: Iterable[Burst], params: ChannelParams) -> float:
    """Aggregate interference degree x for one burst.

    Contributions accumulate additively even when interferers mutually
    overlap; callers pass the non-cancelled bursts of other packets (the
    target's own copies never overlap it by construction, so including them
    is harmless).
    """
    return sum(overlap_fraction(target, other, params) for other in others)


def snir(x: float, snr_linear: float) -> float:
    """SNIR = SNR / (x * SNR + 1) for equal received power."""
    return snr_linear / (x * snr_linear + 1.0)


def decoding_threshold(params: ChannelParams) -> float:
    """Shannon-bound decoding threshold 2^R - 1, in linear scale."""
    return 2.0 ** params.rate - 1.0


def is_decodable(x: float, params: ChannelParams) -> bool:
    """Whether a burst with aggregate interference x decodes.

    No FEC: any overlap destroys the burst. Shannon FEC: the burst's SNIR
    must be at least the decoding threshold.
    """
    if params.fec_mode is FecMode.NOFEC:
        return x < EPS_ZERO
    return snir(x, params.snr_linear) >= decoding_threshold(params)


def decodable_mask(x, params: ChannelParams):
    """Vectorized is_decodable over an array of interference degrees.

    Evaluates the same expressions as is_decodable so scalar and array
    paths cannot disagree on boundary values.
    """
    if params.fec_mode is FecMode.NOFEC:
        return x < EPS_ZERO
    return params.snr_linear / (x * params.snr_linear + 1.0) >= decoding_threshold(params)


def max_decodable_interference(params: ChannelParams) -> float:
    """Largest x that still decodes; the threshold form of is_decodable.

    No FEC maps to EPS_ZERO. Shannon FEC solves
    SNR / (x * SNR + 1) >= 2^R - 1 for x.
    """
    if params.fec_mode is FecMode.NOFEC:
        return EPS_ZERO
    thr = decoding_threshold(params)
    snr = params.snr_linear
    return max(0.0, 1.0 / thr - 1.0 / snr)
