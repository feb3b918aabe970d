"""Packet-delay model for stable channels under geometric retransmissions.

Delay is counted in frames, from the start of the frame of the first
attempt to the end of the frame of successful reception. The PMF assumes
an attempt-independent loss probability frozen at the operating load.
"""
from __future__ import annotations

import csv
from typing import Sequence, TextIO

import numpy as np

from .model import ChannelParams, ValidationError


def _check_probs(plr: float, pr: float) -> None:
    if not (0.0 <= plr < 1.0):
        raise ValidationError(f"plr must lie in [0, 1), got {plr}")
    if not (0.0 < pr <= 1.0):
        raise ValidationError(f"pr must lie in (0, 1], got {pr}")


def delay_pmf(plr: float, pr: float, f: int) -> float:
    """P(packet delay = f frames).

    f = 1: success at the first attempt, 1 - PLR. f >= 2: the first attempt
    fails, then f - 2 frames pass without a successful retransmission, then
    one succeeds: PLR [p_r (1 - PLR)] [1 - p_r + PLR p_r]^(f-2).
    """
    _check_probs(plr, pr)
    if not isinstance(f, (int, np.integer)) or f < 1:
        raise ValidationError(f"f must be an integer >= 1, got {f}")
    if f == 1:
        return 1.0 - plr
    q = 1.0 - pr + plr * pr
    return plr * (pr * (1.0 - plr)) * q ** (f - 2)


def expected_delay(plr: float, pr: float) -> float:
    """Mean delay in frames, the closed form of sum f * pmf(f).

    Diverges as plr -> 1, hence the plr < 1 requirement.
    """
    _check_probs(plr, pr)
    q = 1.0 - pr + plr * pr
    return (1.0 - plr) + 2.0 * plr + plr * q / (pr * (1.0 - plr))


def little_delay(n_b_op: float, g_out_op: float, params: ChannelParams) -> float:
    """Mean backlog residence in frames via Little's theorem.

    N_B tau / (G_OUT T_F) at the operating point. Counts only the
    backlogged stage, so it sits exactly one frame below expected_delay
    (the first-attempt frame); both are reported side by side rather than
    reconciled.
    """
    if n_b_op < 0:
        raise ValidationError(f"n_b_op must be >= 0, got {n_b_op}")
    if g_out_op <= 0:
        raise ValidationError(f"g_out_op must be > 0, got {g_out_op}")
    return n_b_op / (g_out_op * params.slots_per_frame)


def delay_table(plr: float, pr: float, *, tail: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(f, pmf, cdf) arrays up to the first f where cdf >= 1 - tail."""
    _check_probs(plr, pr)
    fs = [1]
    pmf = [delay_pmf(plr, pr, 1)]
    cdf = [pmf[0]]
    q = 1.0 - pr + plr * pr
    while cdf[-1] < 1.0 - tail:
        f = fs[-1] + 1
        p = plr * (pr * (1.0 - plr)) * q ** (f - 2)
        fs.append(f)
        pmf.append(p)
        cdf.append(cdf[-1] + p)
        if p == 0.0:  # plr == 0: all mass at f=1
            break
    return np.array(fs), np.array(pmf), np.array(cdf)


DELAY_COLUMNS = ("f", "pmf", "cdf")


def write_delay_csv(plr: float, pr: float, fh: TextIO, *, tail: float = 1e-9,
                    metadata: Sequence[tuple[str, str]] = ()) -> None:
    fs, pmf, cdf = delay_table(plr, pr, tail=tail)
    for key, value in metadata:
        fh.write(f"# {key}={value}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(DELAY_COLUMNS)
    for f, p, c in zip(fs, pmf, cdf):
        writer.writerow([int(f), repr(float(p)), repr(float(c))])
