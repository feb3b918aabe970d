"""Equilibrium-contour stability analysis for closed-loop retransmissions.

The contour is the locus where expected new-transmission load equals
expected throughput: g_t = G (1 - PLR(G)) with backlog
n_b = G PLR(G) T_F / (tau p_r). Intersections with a population's channel
load line are equilibria, classified by the sink test: a point is stable
when backlog drifts down just above it and up just below it.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, TextIO

import numpy as np

from .model import ChannelParams, PlrCurve, ValidationError


class CoverageError(RuntimeError):
    """The sampled PLR curve does not cover the loads the analysis needs."""


def isotonic_increasing(values: Sequence[float]) -> np.ndarray:
    """Smallest-L2 nondecreasing fit (pool adjacent violators)."""
    means: list[float] = []
    counts: list[int] = []
    for v in np.asarray(values, dtype=np.float64):
        means.append(float(v))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m = (means[-1] * counts[-1] + means[-2] * counts[-2]) / (counts[-1] + counts[-2])
            counts[-2] += counts[-1]
            means[-2] = m
            means.pop()
            counts.pop()
    return np.repeat(means, counts)


@dataclass(frozen=True)
class PlrInterpolator:
    """Monotone piecewise-linear PLR(G) over the sampled grid.

    Monte Carlo noise is removed by isotonic regression before
    interpolation; raw values stay available. Queries outside the sampled
    range are refused rather than extrapolated.
    """

    g: np.ndarray
    plr_raw: np.ndarray
    plr_iso: np.ndarray

    @classmethod
    def from_curve(cls, curve: PlrCurve) -> "PlrInterpolator":
        g = curve.g_values
        raw = curve.plr_values
        iso = np.clip(isotonic_increasing(raw), 0.0, 1.0)
        return cls(g=g, plr_raw=raw, plr_iso=iso)

    @property
    def g_min(self) -> float:
        return float(self.g[0])

    @property
    def g_max(self) -> float:
        return float(self.g[-1])

    def __call__(self, g):
        g = np.asarray(g, dtype=np.float64)
        if np.any(g < self.g_min - 1e-12) or np.any(g > self.g_max + 1e-12):
            raise CoverageError(
                f"load {g[(g < self.g_min - 1e-12) | (g > self.g_max + 1e-12)]} outside "
                f"the sampled range [{self.g_min}, {self.g_max}]"
            )
        return np.interp(g, self.g, self.plr_iso)


@dataclass(frozen=True)
class PopulationSpec:
    """Retransmitting user population: finite (n_tot) or infinite (Poisson).

    p0 is the per-frame transmission probability of a thinking user, pr the
    per-frame retransmission probability of a backlogged user. lambda_rate
    (expected new packets per frame) applies only to infinite populations.
    """

    p0: float
    pr: float
    n_tot: int | None = None
    lambda_rate: float | None = None

    def __post_init__(self):
        if not (0 < self.p0 <= 1):
            raise ValidationError(f"p0 must be in (0, 1], got {self.p0}")
        if not (0 < self.pr <= 1):
            raise ValidationError(f"pr must be in (0, 1], got {self.pr}")
        if self.n_tot is None:
            if self.lambda_rate is None or self.lambda_rate < 0:
                raise ValidationError("infinite population needs lambda_rate >= 0")
        elif not (isinstance(self.n_tot, int) and self.n_tot >= 1):
            raise ValidationError(f"n_tot must be an integer >= 1, got {self.n_tot}")

    @property
    def infinite(self) -> bool:
        return self.n_tot is None


@dataclass(frozen=True)
class EquilibriumContour:
    """Contour samples, parameterized by total load G (n_b nondecreasing)."""

    g: np.ndarray
    g_t: np.ndarray
    n_b: np.ndarray
    plr: np.ndarray
    pop: PopulationSpec
    params: ChannelParams

    def __post_init__(self):
        for arr in (self.g, self.g_t, self.n_b, self.plr):
            arr.setflags(write=False)


def equilibrium_contour(curve: PlrCurve, pop: PopulationSpec, params: ChannelParams,
                        n_grid: int = 512) -> EquilibriumContour:
    """Evaluate the equilibrium contour on a dense grid over the sampled range."""
    interp = PlrInterpolator.from_curve(curve)
    g = np.linspace(interp.g_min, interp.g_max, n_grid)
    plr = interp(g)
    g_t = g * (1.0 - plr)
    n_b = g * plr * params.slots_per_frame / pop.pr
    return EquilibriumContour(g=g, g_t=g_t, n_b=n_b, plr=plr, pop=pop, params=params)


@dataclass(frozen=True)
class LoadLine:
    """Expected new-transmission load versus backlog for one population.

    Finite populations: n_b = n_tot - g_t T_F / (tau p0), a line through
    (0, n_tot). Infinite populations: the vertical line g_t = lambda tau / T_F.
    """

    pop: PopulationSpec
    params: ChannelParams

    @property
    def infinite(self) -> bool:
        return self.pop.infinite

    @property
    def g_t_max(self) -> float:
        if self.infinite:
            return self.pop.lambda_rate / self.params.slots_per_frame
        return self.pop.n_tot * self.pop.p0 / self.params.slots_per_frame

    def g_t_at(self, n_b):
        """New-transmission load at a given backlog (defined for both kinds)."""
        if self.infinite:
            return np.broadcast_to(self.g_t_max, np.shape(n_b)).astype(float) if np.ndim(n_b) else self.g_t_max
        return (self.pop.n_tot - np.asarray(n_b, dtype=np.float64)) * self.pop.p0 / self.params.slots_per_frame

    def __call__(self, g_t):
        """Backlog at a given new-transmission load (finite populations only)."""
        if self.infinite:
            raise ValidationError("an infinite-population load line is vertical; use g_t_at")
        g_t = np.asarray(g_t, dtype=np.float64)
        if np.any(g_t < -1e-12) or np.any(g_t > self.g_t_max + 1e-12):
            raise ValidationError(f"g_t must lie in [0, {self.g_t_max}]")
        return self.pop.n_tot - g_t * self.params.slots_per_frame / self.pop.p0


def load_line(pop: PopulationSpec, params: ChannelParams) -> LoadLine:
    return LoadLine(pop=pop, params=params)


class PointKind(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


class PointRole(str, Enum):
    OPERATING = "operating"
    SATURATION = "saturation"
    INTERMEDIATE = "intermediate"


class Verdict(str, Enum):
    STABLE = "StableChannel"
    BISTABLE = "BistableChannel"
    OVERLOADED = "OverloadedChannel"


@dataclass(frozen=True)
class EquilibriumPoint:
    g_t: float
    n_b: float
    g_total: float
    kind: PointKind
    role: PointRole


@dataclass(frozen=True)
class EquilibriumReport:
    """All equilibria of one (contour, load line) pair plus the verdict.

    diverges marks infinite populations whose backlog grows without bound
    past the last intersection; the saturation 'point at infinity' is
    reported through this flag rather than a coordinate.
    """

    points: tuple[EquilibriumPoint, ...]
    verdict: Verdict
    diverges: bool
    tolerance: float
    saturation_threshold: float


def _interp_root(contour: EquilibriumContour, line: LoadLine,
                 k: int, t: float) -> tuple[float, float, float]:
    n_b = contour.n_b[k] + t * (contour.n_b[k + 1] - contour.n_b[k])
    g = contour.g[k] + t * (contour.g[k + 1] - contour.g[k])
    g_t = float(line.g_t_at(n_b))
    return float(g_t), float(n_b), float(g)


def find_equilibria(contour: EquilibriumContour, line: LoadLine, *,
                    saturation_fraction: float = 0.05) -> EquilibriumReport:
    """Locate and classify every intersection of the load line and contour.

    The signed horizontal gap delta(n_b) = g_t_line(n_b) - g_t_contour(n_b)
    is swept along the contour; sign changes are intersections. A point is
    stable (a sink) when delta is positive below it and negative above.
    """
    delta = np.asarray(line.g_t_at(contour.n_b)) - contour.g_t
    n = len(delta)

    if delta[0] < 0:
        raise CoverageError(
            "load line is already left of the contour at the lowest sampled load; "
            "extend the curve toward lower G"
        )

    raw: list[tuple[float, float, float, bool, int]] = []  # (g_t, n_b, g, stable, segment)
    k = 0
    while k < n - 1:
        a, b = delta[k], delta[k + 1]
        if a == 0.0:
            # root exactly on a sample; classify with the nearest nonzero signs
            j = k
            while j < n - 1 and delta[j + 1] == 0.0:
                j += 1
            prev_sign = 1.0 if k == 0 else np.sign(delta[k - 1])
            next_sign = np.sign(delta[j + 1]) if j < n - 1 else -1.0
            if prev_sign > 0 and next_sign < 0:
                g_t, n_b, g = float(contour.g_t[k]), float(contour.n_b[k]), float(contour.g[k])
                raw.append((g_t, n_b, g, True, k))
            elif prev_sign < 0 and next_sign > 0:
                g_t, n_b, g = float(contour.g_t[k]), float(contour.n_b[k]), float(contour.g[k])
                raw.append((g_t, n_b, g, False, k))
            k = j + 1
            continue
        if a * b < 0:
            t = a / (a - b)
            g_t, n_b, g = _interp_root(contour, line, k, t)
            raw.append((g_t, n_b, g, a > 0, k))
        k += 1

    # deduplicate grazes: adjacent opposite-sense roots within one grid cell
    pruned: list[tuple[float, float, float, bool, int]] = []
    for item in raw:
        if pruned:
            prev = pruned[-1]
            cell = abs(contour.n_b[item[4] + 1] - contour.n_b[item[4]])
            if item[3] != prev[3] and abs(item[1] - prev[1]) <= cell:
                pruned.pop()
                continue
        pruned.append(item)

    diverges = bool(line.infinite and delta[-1] > 0)
    if not pruned:
        if diverges and bool((delta > 0).all()):
            tol = 1e-6 * float(np.max(contour.g_t))
            return EquilibriumReport(points=(), verdict=Verdict.OVERLOADED, diverges=True,
                                     tolerance=tol, saturation_threshold=saturation_fraction)
        raise CoverageError("no intersection found within the sampled curve range")

    if not line.infinite and delta[-1] > 0 and contour.n_b[-1] < line.pop.n_tot:
        raise CoverageError(
            "curve coverage ends while the backlog still drifts upward; "
            "extend the sweep toward higher G to reach the saturation point"
        )
    if line.infinite and delta[-1] < 0:
        raise CoverageError(
            "infinite-population line needs coverage past the contour's falling branch; "
            "extend the sweep toward higher G"
        )

    peak_g_t = float(np.max(contour.g_t))
    threshold = saturation_fraction * peak_g_t
    stable_idx = [i for i, item in enumerate(pruned) if item[3]]
    operating_idx = None
    candidates = [i for i in stable_idx if pruned[i][0] >= threshold]
    if candidates:
        operating_idx = max(candidates, key=lambda i: pruned[i][0])

    points = []
    for i, (g_t, n_b, g, stable, _) in enumerate(pruned):
        if not stable:
            role = PointRole.INTERMEDIATE
        elif i == operating_idx:
            role = PointRole.OPERATING
        elif g_t < threshold:
            role = PointRole.SATURATION
        else:
            role = PointRole.INTERMEDIATE
        points.append(EquilibriumPoint(g_t=g_t, n_b=n_b, g_total=g,
                                       kind=PointKind.STABLE if stable else PointKind.UNSTABLE,
                                       role=role))

    n_stable = len(stable_idx)
    if diverges:
        verdict = Verdict.BISTABLE if n_stable else Verdict.OVERLOADED
    elif len(points) == 1 and n_stable == 1:
        verdict = Verdict.STABLE if points[0].role is PointRole.OPERATING else Verdict.OVERLOADED
    elif n_stable >= 2:
        verdict = Verdict.BISTABLE
    else:
        raise CoverageError("equilibrium pattern is inconsistent; the curve likely needs more coverage")

    tol = 1e-6 * peak_g_t
    return EquilibriumReport(points=tuple(points), verdict=verdict, diverges=diverges,
                             tolerance=tol, saturation_threshold=saturation_fraction)


def drift_trajectory(pop: PopulationSpec, params: ChannelParams, curve: PlrCurve,
                     n_b_start: float, n_frames: int) -> np.ndarray:
    """Frame-by-frame expected backlog starting from n_b_start.

    Each step forms the total load from new transmissions plus
    retransmissions at the current backlog, then applies the expected
    balance N_B <- N_B (1 - p_r) + G (T_F/tau) PLR(G).
    """
    if not pop.infinite and not (0 <= n_b_start <= pop.n_tot):
        raise ValidationError(f"n_b_start must lie in [0, {pop.n_tot}], got {n_b_start}")
    interp = PlrInterpolator.from_curve(curve)
    spf = params.slots_per_frame
    out = np.empty(n_frames + 1, dtype=np.float64)
    n_b = float(n_b_start)
    out[0] = n_b
    for i in range(1, n_frames + 1):
        g_t = pop.lambda_rate / spf if pop.infinite else (pop.n_tot - n_b) * pop.p0 / spf
        g = g_t + n_b * pop.pr / spf
        plr = float(interp(g))
        n_b = n_b * (1.0 - pop.pr) + g * spf * plr
        out[i] = n_b
    return out


CONTOUR_COLUMNS = ("g", "g_t", "n_b", "plr_interp")


def write_contour_csv(contour: EquilibriumContour, fh: TextIO, *,
                      metadata: Sequence[tuple[str, str]] = ()) -> None:
    for key, value in metadata:
        fh.write(f"# {key}={value}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CONTOUR_COLUMNS)
    for i in range(len(contour.g)):
        writer.writerow([repr(float(contour.g[i])), repr(float(contour.g_t[i])),
                         repr(float(contour.n_b[i])), repr(float(contour.plr[i]))])


def report_to_dict(report: EquilibriumReport, *, inputs: dict | None = None) -> dict:
    return {
        "verdict": report.verdict.value,
        "diverges": report.diverges,
        "points": [
            {"g_t": p.g_t, "n_b": p.n_b, "g_total": p.g_total,
             "kind": p.kind.value, "role": p.role.value}
            for p in report.points
        ],
        "tolerances": {
            "intersection_gap": report.tolerance,
            "saturation_fraction": report.saturation_threshold,
        },
        "inputs": inputs or {},
    }


def write_report_json(report: EquilibriumReport, fh: TextIO, *, inputs: dict | None = None) -> None:
    json.dump(report_to_dict(report, inputs=inputs), fh, indent=2, sort_keys=True)
    fh.write("\n")
