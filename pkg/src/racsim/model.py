"""Shared domain types: channel parameters, degree distributions, frames, PLR curves."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12  # absolute tolerance for probability sums; inputs are rejected, not renormalized


class ValidationError(ValueError):
    """Raised when a domain type is constructed with violated invariants."""


class Scheme(str, Enum):
    ALOHA = "ALOHA"
    CRA = "CRA"
    SA = "SA"
    CRDSA = "CRDSA"

    @property
    def slotted(self) -> bool:
        return self in (Scheme.SA, Scheme.CRDSA)


class FecMode(str, Enum):
    NOFEC = "nofec"
    SHANNON = "shannon"


@dataclass(frozen=True)
class ChannelParams:
    """Scenario constants for one channel configuration.

    Times are real-valued milliseconds; slot indices are derived for the
    slotted schemes from frame_duration / burst_duration.
    """

    frame_duration: float        # T_F, ms
    burst_duration: float        # tau, ms (single burst length for every packet)
    modulation_index: int        # M >= 2
    coding_rate: float           # R_C in (0, 1]
    snr_db: float
    i_max: int                   # max decoder iterations
    scheme: Scheme
    fec_mode: FecMode

    def __post_init__(self):
        if not self.burst_duration > 0:
            raise ValidationError(f"burst_duration must be > 0, got {self.burst_duration}")
        if not self.frame_duration >= self.burst_duration:
            raise ValidationError(
                f"frame_duration {self.frame_duration} must be >= burst_duration {self.burst_duration}"
            )
        if not (isinstance(self.modulation_index, int) and self.modulation_index >= 2):
            raise ValidationError(f"modulation_index must be an integer >= 2, got {self.modulation_index}")
        if not (0 < self.coding_rate <= 1):
            raise ValidationError(f"coding_rate must be in (0, 1], got {self.coding_rate}")
        if not (isinstance(self.i_max, int) and self.i_max >= 1):
            raise ValidationError(f"i_max must be an integer >= 1, got {self.i_max}")
        if not isinstance(self.scheme, Scheme):
            raise ValidationError(f"scheme must be a Scheme, got {self.scheme!r}")
        if not isinstance(self.fec_mode, FecMode):
            raise ValidationError(f"fec_mode must be a FecMode, got {self.fec_mode!r}")
        if self.scheme.slotted:
            ratio = self.frame_duration / self.burst_duration
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValidationError(
                    f"slotted scheme needs an integer slot count, got T_F/tau = {ratio}"
                )

    @property
    def rate(self) -> float:
        """Spectral rate R = R_C * log2(M)."""
        return self.coding_rate * math.log2(self.modulation_index)

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def is_slotted(self) -> bool:
        return self.scheme.slotted

    @property
    def n_slots(self) -> int:
        if not self.is_slotted:
            raise ValidationError(f"n_slots is only defined for slotted schemes, not {self.scheme}")
        return round(self.frame_duration / self.burst_duration)

    @property
    def slots_per_frame(self) -> float:
        """T_F / tau as a real number, valid for every scheme."""
        return self.frame_duration / self.burst_duration


def rate(params: ChannelParams) -> float:
    """R = R_C * log2(M)."""
    return params.rate


@dataclass(frozen=True)
class DegreeDistribution:
    """Burst degree distribution as explicit (degree, probability) entries.

    Kept as a finite list rather than a polynomial so irregular
    distributions are supported directly.
    """

    entries: tuple[tuple[int, float], ...]

    def __init__(self, entries: Iterable[tuple[int, float]]):
        object.__setattr__(self, "entries", tuple((int(d), float(p)) for d, p in entries))
        if not self.entries:
            raise ValidationError("degree distribution needs at least one entry")
        degrees = [d for d, _ in self.entries]
        probs = [p for _, p in self.entries]
        if any(d < 1 for d in degrees):
            raise ValidationError(f"degrees must be integers >= 1, got {degrees}")
        if len(set(degrees)) != len(degrees):
            raise ValidationError(f"degrees must be distinct, got {degrees}")
        if any(p < 0 for p in probs):
            raise ValidationError(f"probabilities must be >= 0, got {probs}")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities must sum to 1 within {PROB_TOL}, got {total!r}")

    @classmethod
    def regular(cls, degree: int) -> "DegreeDistribution":
        """All packets transmit exactly `degree` copies."""
        return cls([(degree, 1.0)])

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(d for d, _ in self.entries)

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.entries)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    @property
    def mean_degree(self) -> float:
        return math.fsum(d * p for d, p in self.entries)

    def sample_degree(self, rng: np.random.Generator) -> int:
        """Draw one burst degree d with probability Lambda_d."""
        return int(self.sample_degrees(rng, 1)[0])

    def sample_degrees(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n burst degrees (vectorized)."""
        if len(self.entries) == 1:
            return np.full(n, self.entries[0][0], dtype=np.int64)
        return rng.choice(np.array(self.degrees, dtype=np.int64), size=n, p=self.probabilities)


def sample_degree(dist: DegreeDistribution, rng: np.random.Generator) -> int:
    return dist.sample_degree(rng)


@dataclass(frozen=True)
class Burst:
    """One transmitted copy of a packet occupying burst_duration on the channel."""

    packet_id: int
    copy_index: int
    start: float                 # ms from frame start, in [0, T_F - tau]
    slot: int | None = None      # slot index for slotted schemes
    cancelled: bool = False
    decoded: bool = False


@dataclass(frozen=True)
class FrameRealization:
    """One generated frame: all burst copies of all packets, as flat arrays.

    Arrays are aligned per burst; `bursts` materializes the object view on
    demand. Instances are immutable and safe to share across workers.
    """

    params: ChannelParams
    n_packets: int
    packet_ids: np.ndarray       # int64, one entry per burst
    copy_indices: np.ndarray     # int64
    starts: np.ndarray           # float64, ms
    slots: np.ndarray | None     # int64 for slotted schemes, else None
    cancelled_mask: np.ndarray = field(default=None)  # bool, initial cancellation flags
    decoded_mask: np.ndarray = field(default=None)    # bool, initial decoded flags

    def __post_init__(self):
        n_bursts = len(self.starts)
        for name in ("packet_ids", "copy_indices", "starts"):
            arr = np.asarray(getattr(self, name))
            object.__setattr__(self, name, arr)
            if len(arr) != n_bursts:
                raise ValidationError(f"{name} length {len(arr)} != number of bursts {n_bursts}")
        if self.cancelled_mask is None:
            object.__setattr__(self, "cancelled_mask", np.zeros(n_bursts, dtype=bool))
        if self.decoded_mask is None:
            object.__setattr__(self, "decoded_mask", np.zeros(n_bursts, dtype=bool))
        if len(self.cancelled_mask) != n_bursts or len(self.decoded_mask) != n_bursts:
            raise ValidationError("flag masks must have one entry per burst")

        p = self.params
        span = p.frame_duration - p.burst_duration
        if n_bursts:
            if self.starts.min() < -1e-9 or self.starts.max() > span + 1e-9:
                raise ValidationError(
                    f"burst starts must lie in [0, {span}], got range "
                    f"[{self.starts.min()}, {self.starts.max()}]"
                )
            if len(np.unique(self.packet_ids)) != self.n_packets:
                raise ValidationError(
                    f"n_packets={self.n_packets} but bursts carry "
                    f"{len(np.unique(self.packet_ids))} distinct packet ids"
                )
        elif self.n_packets != 0:
            raise ValidationError(f"empty frame must have n_packets=0, got {self.n_packets}")

        if p.is_slotted:
            if self.slots is None:
                raise ValidationError("slotted frames need slot indices")
            slots = np.asarray(self.slots)
            object.__setattr__(self, "slots", slots)
            if n_bursts and (slots.min() < 0 or slots.max() >= p.n_slots):
                raise ValidationError(f"slot indices must lie in [0, {p.n_slots})")
        self._check_same_packet_separation()

        for name in ("packet_ids", "copy_indices", "starts", "slots", "cancelled_mask", "decoded_mask"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def _check_same_packet_separation(self):
        # copies of one packet must not overlap: |start_i - start_j| >= tau,
        # or distinct slots for slotted schemes
        if len(self.starts) == 0:
            return
        tau = self.params.burst_duration
        if self.params.is_slotted:
            order = np.lexsort((self.slots, self.packet_ids))
            same = self.packet_ids[order][1:] == self.packet_ids[order][:-1]
            clash = same & (self.slots[order][1:] == self.slots[order][:-1])
        else:
            order = np.lexsort((self.starts, self.packet_ids))
            same = self.packet_ids[order][1:] == self.packet_ids[order][:-1]
            gaps = self.starts[order][1:] - self.starts[order][:-1]
            clash = same & (gaps < tau - 1e-9)
        if clash.any():
            pid = int(self.packet_ids[order][1:][clash][0])
            raise ValidationError(f"copies of packet {pid} overlap within the frame")

    @classmethod
    def from_bursts(cls, params: ChannelParams, bursts: Sequence[Burst], n_packets: int | None = None) -> "FrameRealization":
        """Build a frame from Burst objects (hand-built topologies, tests)."""
        packet_ids = np.array([b.packet_id for b in bursts], dtype=np.int64)
        starts = np.array([b.start for b in bursts], dtype=np.float64)
        slots = None
        if params.is_slotted:
            tau = params.burst_duration
            slots = np.empty(len(bursts), dtype=np.int64)
            for i, b in enumerate(bursts):
                if b.slot is not None:
                    slots[i] = b.slot
                else:
                    s = b.start / tau
                    if abs(s - round(s)) > 1e-9:
                        raise ValidationError(f"burst start {b.start} is not slot-aligned")
                    slots[i] = round(s)
        if n_packets is None:
            n_packets = len(set(b.packet_id for b in bursts))
        return cls(
            params=params,
            n_packets=n_packets,
            packet_ids=packet_ids,
            copy_indices=np.array([b.copy_index for b in bursts], dtype=np.int64),
            starts=starts,
            slots=slots,
            cancelled_mask=np.array([b.cancelled for b in bursts], dtype=bool),
            decoded_mask=np.array([b.decoded for b in bursts], dtype=bool),
        )

    @cached_property
    def bursts(self) -> tuple[Burst, ...]:
        slots = self.slots if self.slots is not None else [None] * len(self.starts)
        return tuple(
            Burst(
                packet_id=int(self.packet_ids[i]),
                copy_index=int(self.copy_indices[i]),
                start=float(self.starts[i]),
                slot=None if slots[i] is None else int(slots[i]),
                cancelled=bool(self.cancelled_mask[i]),
                decoded=bool(self.decoded_mask[i]),
            )
            for i in range(len(self.starts))
        )

    @property
    def n_bursts(self) -> int:
        return len(self.starts)

    @property
    def load(self) -> float:
        """Realized normalized load G = N_tx * tau / T_F."""
        return self.n_packets * self.params.burst_duration / self.params.frame_duration

    def with_flags(self, cancelled_mask=None, decoded_mask=None) -> "FrameRealization":
        """Copy of this frame with replaced cancellation/decoded flags."""
        return FrameRealization(
            params=self.params,
            n_packets=self.n_packets,
            packet_ids=self.packet_ids.copy(),
            copy_indices=self.copy_indices.copy(),
            starts=self.starts.copy(),
            slots=None if self.slots is None else self.slots.copy(),
            cancelled_mask=self.cancelled_mask.copy() if cancelled_mask is None else np.asarray(cancelled_mask, dtype=bool),
            decoded_mask=self.decoded_mask.copy() if decoded_mask is None else np.asarray(decoded_mask, dtype=bool),
        )


@dataclass(frozen=True)
class PlrPoint:
    """One sampled load point of a PLR curve."""

    g: float
    plr: float
    ci95_halfwidth: float
    rounds: int
    realized_g: float

    def __post_init__(self):
        if not (0.0 <= self.plr <= 1.0):
            raise ValidationError(f"plr must lie in [0, 1], got {self.plr}")
        if self.g < 0:
            raise ValidationError(f"g must be >= 0, got {self.g}")

    @property
    def throughput(self) -> float:
        """T(G) = G * (1 - PLR(G))."""
        return self.g * (1.0 - self.plr)


@dataclass(frozen=True)
class PlrCurve:
    """Sampled mapping G -> (PLR estimate, 95% CI halfwidth, rounds)."""

    points: tuple[PlrPoint, ...]

    def __init__(self, points: Iterable[PlrPoint]):
        object.__setattr__(self, "points", tuple(points))
        gs = [p.g for p in self.points]
        if any(b <= a for a, b in zip(gs, gs[1:])):
            raise ValidationError(f"g values must be strictly increasing, got {gs}")

    @property
    def g_values(self) -> np.ndarray:
        return np.array([p.g for p in self.points])

    @property
    def plr_values(self) -> np.ndarray:
        return np.array([p.plr for p in self.points])

    @property
    def throughput_values(self) -> np.ndarray:
        return np.array([p.throughput for p in self.points])

    def peak_throughput(self) -> tuple[float, float]:
        """(G, T) at the sampled point of maximum throughput."""
        t = self.throughput_values
        i = int(np.argmax(t))
        return float(self.g_values[i]), float(t[i])
