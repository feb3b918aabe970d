"""Frame generation: packet counts, burst degrees, and burst placement.

Asynchronous schemes place each packet's copies uniformly on
[0, T_F - tau] with same-packet copies kept non-overlapping by rejection
(redraw the violating start). Slotted schemes pick distinct slots per
packet. Generation is a pure function of the supplied random stream.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ChannelParams, DegreeDistribution, FrameRealization, ValidationError

MAX_PLACEMENT_ATTEMPTS = 1000  # per packet, before the frame counts as over-constrained


class PlacementError(RuntimeError):
    """Same-packet copy placement failed after bounded retries."""


class ArrivalModel(str, Enum):
    FIXED_COUNT = "fixed"
    POISSON = "poisson"


@dataclass(frozen=True)
class LoadSpec:
    """Target normalized load and how packet counts are drawn from it."""

    target_g: float
    arrival_model: ArrivalModel = ArrivalModel.FIXED_COUNT

    def __post_init__(self):
        if self.target_g < 0:
            raise ValidationError(f"target_g must be >= 0, got {self.target_g}")
        if not isinstance(self.arrival_model, ArrivalModel):
            raise ValidationError(f"arrival_model must be an ArrivalModel, got {self.arrival_model!r}")

    def packet_count(self, params: ChannelParams, rng: np.random.Generator) -> int:
        mean = self.target_g * params.slots_per_frame
        if self.arrival_model is ArrivalModel.FIXED_COUNT:
            return round(mean)
        return int(rng.poisson(mean))


def check_degree_fit(params: ChannelParams, dist: DegreeDistribution) -> None:
    """All copies of a max-degree packet must fit in one frame."""
    d = dist.max_degree
    if params.is_slotted:
        if d > params.n_slots:
            raise ValidationError(f"max degree {d} exceeds {params.n_slots} slots per frame")
    elif d * params.burst_duration > params.frame_duration + 1e-9:
        raise ValidationError(
            f"max degree {d} * burst_duration {params.burst_duration} exceeds "
            f"frame_duration {params.frame_duration}"
        )


def _place_async(degrees: np.ndarray, params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Start times for every copy, grouped per packet; returns (sum(degrees),) array."""
    span = params.frame_duration - params.burst_duration
    tau = params.burst_duration
    n = len(degrees)
    offsets = np.concatenate([[0], np.cumsum(degrees)])
    starts = np.empty(offsets[-1], dtype=np.float64)
    for d in np.unique(degrees):
        rows = np.flatnonzero(degrees == d)
        m = len(rows)
        block = np.empty((m, d), dtype=np.float64)
        block[:, 0] = rng.uniform(0.0, span, m)
        attempts = np.zeros(m, dtype=np.int64)
        for j in range(1, d):
            block[:, j] = rng.uniform(0.0, span, m)
            while True:
                bad = (np.abs(block[:, j, None] - block[:, :j]) < tau).any(axis=1)
                if not bad.any():
                    break
                attempts[bad] += 1
                if attempts.max() >= MAX_PLACEMENT_ATTEMPTS:
                    raise PlacementError(
                        f"could not place {d} non-overlapping copies after "
                        f"{MAX_PLACEMENT_ATTEMPTS} attempts (tau={tau}, T_F={params.frame_duration})"
                    )
                block[bad, j] = rng.uniform(0.0, span, int(bad.sum()))
        idx = offsets[rows][:, None] + np.arange(d)[None, :]
        starts[idx.ravel()] = block.ravel()
    return starts


def _place_slotted(degrees: np.ndarray, params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Distinct slot indices for every copy, grouped per packet."""
    n_slots = params.n_slots
    offsets = np.concatenate([[0], np.cumsum(degrees)])
    slots = np.empty(offsets[-1], dtype=np.int64)
    for d in np.unique(degrees):
        rows = np.flatnonzero(degrees == d)
        m = len(rows)
        block = np.empty((m, d), dtype=np.int64)
        block[:, 0] = rng.integers(0, n_slots, m)
        for j in range(1, d):
            block[:, j] = rng.integers(0, n_slots, m)
            while True:
                bad = (block[:, j, None] == block[:, :j]).any(axis=1)
                if not bad.any():
                    break
                block[bad, j] = rng.integers(0, n_slots, int(bad.sum()))
        idx = offsets[rows][:, None] + np.arange(d)[None, :]
        slots[idx.ravel()] = block.ravel()
    return slots


def generate_frame(
    params: ChannelParams,
    dist: DegreeDistribution,
    load: LoadSpec,
    rng: np.random.Generator,
) -> FrameRealization:
    """Generate one frame realization for the target load.

    FixedCount rounds G * T_F/tau to the nearest packet count; Poisson
    draws it. Frames are independent trials (every packet waits for the
    next frame boundary), so no inter-frame state exists.
    """
    check_degree_fit(params, dist)
    n = load.packet_count(params, rng)
    if n == 0:
        empty_i = np.empty(0, dtype=np.int64)
        return FrameRealization(
            params=params, n_packets=0,
            packet_ids=empty_i, copy_indices=empty_i.copy(),
            starts=np.empty(0, dtype=np.float64),
            slots=empty_i.copy() if params.is_slotted else None,
        )
    degrees = dist.sample_degrees(rng, n)
    packet_ids = np.repeat(np.arange(n, dtype=np.int64), degrees)
    ends = np.cumsum(degrees)
    copy_indices = np.arange(int(ends[-1]), dtype=np.int64) - np.repeat(ends - degrees, degrees)
    if params.is_slotted:
        slots = _place_slotted(degrees, params, rng)
        starts = slots * params.burst_duration
    else:
        slots = None
        starts = _place_async(degrees, params, rng)
    return FrameRealization(
        params=params, n_packets=n,
        packet_ids=packet_ids, copy_indices=copy_indices,
        starts=starts, slots=slots,
    )
