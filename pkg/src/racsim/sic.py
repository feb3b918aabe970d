"""Iterative interference-cancellation decoding of one frame.

Each iteration evaluates every non-decoded packet's non-cancelled copies
against the cancellation state frozen at iteration start, then cancels all
copies of the packets that decoded. Freezing the state makes the outcome
independent of burst processing order within an iteration. Asynchronous
frames use a sweep over bursts sorted by start time (only temporal
neighbors within one burst duration can overlap); slotted frames count
co-slot occupancy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelParams, FrameRealization, Scheme
from .phy import decodable_mask


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of decoding one frame.

    decoded_packet_ids holds the packets decoded by this run (packets
    already flagged decoded on input are not repeated). One entry of
    per_iteration_decoded / per_iteration_remaining per productive
    iteration: packets decoded in it, and non-cancelled bursts left after
    its cancellations.
    """

    decoded_packet_ids: frozenset[int]
    iterations_used: int
    per_iteration_decoded: tuple[int, ...]
    per_iteration_remaining: tuple[int, ...]

    def __post_init__(self):
        if sum(self.per_iteration_decoded) != len(self.decoded_packet_ids):
            raise ValueError("per-iteration counts do not sum to the decoded set size")


def _async_interference(starts_sorted: np.ndarray, tau: float) -> np.ndarray:
    """Aggregate interference degree per burst, bursts sorted by start time.

    For equal-length bursts the pairwise overlap is tau - |dt| whenever
    |dt| < tau, so each burst only needs its neighbors; prefix sums give
    the window totals without an inner loop.
    """
    s = starts_sorted
    n = len(s)
    if n == 0:
        return np.empty(0, dtype=np.float64)
    lo = np.searchsorted(s, s - tau, side="right")
    hi = np.searchsorted(s, s + tau, side="left")
    cs = np.concatenate([[0.0], np.cumsum(s)])
    idx = np.arange(n)
    cnt_left = idx - lo
    sum_left = cs[idx] - cs[lo]
    cnt_right = hi - idx - 1
    sum_right = cs[hi] - cs[idx + 1]
    x = (cnt_left - (cnt_left * s - sum_left) / tau) + (cnt_right - (sum_right - cnt_right * s) / tau)
    return np.maximum(x, 0.0)


def _slotted_interference(slots_active: np.ndarray, n_slots: int) -> np.ndarray:
    """Co-slot interferer count per burst (integers, as floats)."""
    occ = np.bincount(slots_active, minlength=n_slots)
    return (occ[slots_active] - 1).astype(np.float64)


def _interference_for_active(frame: FrameRealization, params: ChannelParams,
                             active: np.ndarray, order: np.ndarray) -> np.ndarray:
    """x for every burst (inactive entries 0), against the active set."""
    x = np.zeros(frame.n_bursts, dtype=np.float64)
    if params.is_slotted:
        act_idx = np.flatnonzero(active)
        if len(act_idx):
            x[act_idx] = _slotted_interference(frame.slots[act_idx], params.n_slots)
    else:
        act_sorted = order[active[order]]
        if len(act_sorted):
            x[act_sorted] = _async_interference(frame.starts[act_sorted], params.burst_duration)
    return x


def _packet_index(frame: FrameRealization) -> tuple[np.ndarray, np.ndarray]:
    """Dense packet index per burst plus the original ids."""
    ids, pidx = np.unique(frame.packet_ids, return_inverse=True)
    return ids, pidx


def sic_decode(frame: FrameRealization, params: ChannelParams | None = None) -> DecodeOutcome:
    """Iterative IC decoding, up to i_max iterations or until no progress.

    Per iteration: (a) compute each candidate burst's interference against
    the non-cancelled bursts of other non-decoded packets, (b) a packet
    decodes if any of its copies is decodable, (c) all copies of newly
    decoded packets are cancelled (their in-frame positions are known from
    the decoded copy). Pre-set cancelled/decoded flags on the frame are
    honored as the starting state.
    """
    params = frame.params if params is None else params
    n_bursts = frame.n_bursts
    ids, pidx = _packet_index(frame)
    decoded_pkt = np.zeros(len(ids), dtype=bool)
    decoded_pkt[pidx[frame.decoded_mask]] = True
    initially_decoded = decoded_pkt.copy()
    cancelled = frame.cancelled_mask.copy()
    order = np.argsort(frame.starts, kind="stable") if not params.is_slotted else np.empty(0, dtype=np.int64)

    per_iter_decoded: list[int] = []
    per_iter_remaining: list[int] = []
    for _ in range(params.i_max):
        active = ~cancelled & ~decoded_pkt[pidx]
        x = _interference_for_active(frame, params, active, order)
        hit = active & decodable_mask(x, params)
        if not hit.any():
            break
        new_pkt = np.unique(pidx[hit])
        decoded_pkt[new_pkt] = True
        cancelled |= np.isin(pidx, new_pkt)
        per_iter_decoded.append(len(new_pkt))
        per_iter_remaining.append(int(n_bursts - cancelled.sum()))

    newly = decoded_pkt & ~initially_decoded
    return DecodeOutcome(
        decoded_packet_ids=frozenset(int(i) for i in ids[newly]),
        iterations_used=len(per_iter_decoded),
        per_iteration_decoded=tuple(per_iter_decoded),
        per_iteration_remaining=tuple(per_iter_remaining),
    )


def single_pass_decode(frame: FrameRealization, params: ChannelParams | None = None) -> DecodeOutcome:
    """Classical one-shot decoding without interference cancellation.

    One pass of the decodability test per burst; a packet decodes iff any
    of its copies passes. Baseline for ALOHA and SA.
    """
    params = frame.params if params is None else params
    ids, pidx = _packet_index(frame)
    already = np.zeros(len(ids), dtype=bool)
    already[pidx[frame.decoded_mask]] = True
    active = ~frame.cancelled_mask
    order = np.argsort(frame.starts, kind="stable") if not params.is_slotted else np.empty(0, dtype=np.int64)
    x = _interference_for_active(frame, params, active, order)
    hit = active & decodable_mask(x, params) & ~already[pidx]
    new_ids = np.unique(frame.packet_ids[hit])
    return DecodeOutcome(
        decoded_packet_ids=frozenset(int(i) for i in new_ids),
        iterations_used=1,
        per_iteration_decoded=(len(new_ids),),
        per_iteration_remaining=(int(active.sum()),),
    )


def decode_frame(frame: FrameRealization, params: ChannelParams | None = None,
                 force_sic: bool = False) -> DecodeOutcome:
    """Route a frame to its scheme's decoder.

    Degree-1 schemes (ALOHA, SA) take the single-pass baseline; CRA and
    CRDSA take iterative IC. force_sic applies IC regardless, for
    experiments on degree-1 schemes.
    """
    params = frame.params if params is None else params
    if force_sic or params.scheme in (Scheme.CRA, Scheme.CRDSA):
        return sic_decode(frame, params)
    return single_pass_decode(frame, params)
