"""Monte Carlo estimation of PLR(G) and T(G) over a load sweep.

Every simulation round owns an independent random stream derived from
(master_seed, point_index, round_index), so aggregation is a pure fold
over integer packet counts and the results are bit-identical for any
worker count or chunking.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .model import ChannelParams, DegreeDistribution, PlrCurve, PlrPoint, ValidationError
from .sic import decode_frame
from .traffic import ArrivalModel, LoadSpec, generate_frame

CURVE_COLUMNS = ("g", "plr", "ci95", "throughput", "rounds", "realized_g")


@dataclass(frozen=True)
class SweepSpec:
    """Load grid, rounds per point, and the master seed of the sweep."""

    g_values: tuple[float, ...]
    rounds_per_point: int = 10_000
    master_seed: int = 0

    def __init__(self, g_values: Iterable[float], rounds_per_point: int = 10_000, master_seed: int = 0):
        object.__setattr__(self, "g_values", tuple(float(g) for g in g_values))
        object.__setattr__(self, "rounds_per_point", int(rounds_per_point))
        object.__setattr__(self, "master_seed", int(master_seed))
        if not self.g_values:
            raise ValidationError("sweep needs at least one g value")
        if any(g < 0 for g in self.g_values):
            raise ValidationError(f"g values must be >= 0, got {self.g_values}")
        if any(b <= a for a, b in zip(self.g_values, self.g_values[1:])):
            raise ValidationError(f"g values must be strictly increasing, got {self.g_values}")
        if self.rounds_per_point < 1:
            raise ValidationError(f"rounds_per_point must be >= 1, got {self.rounds_per_point}")


def round_rng(master_seed: int, point_index: int, round_index: int) -> np.random.Generator:
    """Independent stream for one (point, round) work item."""
    return np.random.default_rng([master_seed, point_index, round_index])


def _run_rounds(params: ChannelParams, dist: DegreeDistribution, g: float,
                arrival_model: ArrivalModel, master_seed: int, point_index: int,
                round_lo: int, round_hi: int, force_sic: bool) -> tuple[int, int]:
    """Totals (transmitted, decoded) over rounds [round_lo, round_hi)."""
    load = LoadSpec(target_g=g, arrival_model=arrival_model)
    tx = dec = 0
    for r in range(round_lo, round_hi):
        rng = round_rng(master_seed, point_index, r)
        frame = generate_frame(params, dist, load, rng)
        if frame.n_packets == 0:
            continue
        outcome = decode_frame(frame, params, force_sic=force_sic)
        tx += frame.n_packets
        dec += len(outcome.decoded_packet_ids)
    return tx, dec


def _run_rounds_star(args) -> tuple[int, int, int]:
    tx, dec = _run_rounds(*args)
    return args[5], tx, dec


def _point_from_totals(params: ChannelParams, g: float, rounds: int, tx: int, dec: int) -> PlrPoint:
    if tx > 0:
        plr = (tx - dec) / tx
        ci95 = 1.96 * math.sqrt(plr * (1.0 - plr) / tx)
    else:
        # no packets transmitted at this load point; plr reported as 0 with
        # realized_g = 0 flagging the empty sample
        plr = 0.0
        ci95 = 0.0
    realized_g = tx / rounds / params.slots_per_frame
    return PlrPoint(g=g, plr=plr, ci95_halfwidth=ci95, rounds=rounds, realized_g=realized_g)


def estimate_plr(params: ChannelParams, dist: DegreeDistribution, g: float,
                 rounds: int, seed: int, *, arrival_model: ArrivalModel = ArrivalModel.FIXED_COUNT,
                 point_index: int = 0, force_sic: bool = False) -> tuple[float, float]:
    """PLR estimate and 95% CI halfwidth at one load point.

    PLR counts packets (not bursts): lost / transmitted over all rounds.
    """
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    tx, dec = _run_rounds(params, dist, g, arrival_model, seed, point_index, 0, rounds, force_sic)
    point = _point_from_totals(params, g, rounds, tx, dec)
    return point.plr, point.ci95_halfwidth


def sweep(params: ChannelParams, dist: DegreeDistribution, spec: SweepSpec, *,
          arrival_model: ArrivalModel = ArrivalModel.FIXED_COUNT,
          workers: int = 1, force_sic: bool = False) -> PlrCurve:
    """Estimate the full PLR curve over the sweep grid.

    Rounds are embarrassingly parallel; work is split into (point, round
    range) chunks and the integer totals are folded per point, so the
    curve does not depend on the worker count.
    """
    rounds = spec.rounds_per_point
    totals = {i: [0, 0] for i in range(len(spec.g_values))}
    if workers <= 1:
        for i, g in enumerate(spec.g_values):
            tx, dec = _run_rounds(params, dist, g, arrival_model, spec.master_seed, i, 0, rounds, force_sic)
            totals[i] = [tx, dec]
    else:
        chunk = max(1, math.ceil(rounds / (workers * 4)))
        tasks = []
        for i, g in enumerate(spec.g_values):
            for lo in range(0, rounds, chunk):
                hi = min(lo + chunk, rounds)
                tasks.append((params, dist, g, arrival_model, spec.master_seed, i, lo, hi, force_sic))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for point_index, tx, dec in pool.map(_run_rounds_star, tasks, chunksize=1):
                totals[point_index][0] += tx
                totals[point_index][1] += dec
    points = [
        _point_from_totals(params, g, rounds, totals[i][0], totals[i][1])
        for i, g in enumerate(spec.g_values)
    ]
    return PlrCurve(points)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def write_curve_csv(curve: PlrCurve, fh: TextIO, *, metadata: Sequence[tuple[str, str]] = ()) -> None:
    """Curve CSV: comment metadata, then a header row, then one row per point.

    Floats are written with repr (shortest round-trip decimal), so reruns
    with the same inputs produce byte-identical bodies.
    """
    for key, value in metadata:
        fh.write(f"# {key}={value}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for p in curve.points:
        writer.writerow([repr(p.g), repr(p.plr), repr(p.ci95_halfwidth),
                         repr(p.throughput), p.rounds, repr(p.realized_g)])


def read_curve_csv(fh: TextIO) -> PlrCurve:
    rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    points = []
    for row in reader:
        points.append(PlrPoint(
            g=float(row["g"]), plr=float(row["plr"]),
            ci95_halfwidth=float(row["ci95"]), rounds=int(row["rounds"]),
            realized_g=float(row["realized_g"]),
        ))
    return PlrCurve(points)
