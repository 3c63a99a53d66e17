"""Fluctuation scoring: time derivative of a centered sliding-window win rate.

Pipeline: (1) windowed win rate at every point where a symmetric half-open
window of 2*w_v points fits; (2) linear interpolation of those rates onto a
uniform time grid; (3) central differences on the grid (one-sided at the
ends); (4) each point reports the derivative at its nearest grid node.

Two exactness guarantees are engineered in, not approximated:

* Antisymmetry between players. Rates enter the pipeline centered at zero
  ((wins - w_v) / (2*w_v)), and every downstream operation — averaging,
  interpolation, differencing — is IEEE sign-symmetric, so the player-2
  series is the exact bitwise negation of the player-1 series.
* Time-shift invariance. All times are reduced to offsets from the first
  valid point before gridding (integer subtraction), so adding a constant to
  every timestamp changes nothing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .ingest import MatchTimeline

__all__ = [
    "DbwpParams",
    "DbwpSeries",
    "windowed_win_rate",
    "grid_time_derivative",
    "dbwp_scores",
    "write_dbwp_csv",
]


@dataclass(frozen=True)
class DbwpParams:
    w_v: int = 5
    grid_step_s: float = 1.0
    player: int = 1

    def check(self) -> None:
        if self.w_v < 1:
            raise ValueError(f"w_v must be >= 1, got {self.w_v}")
        if not self.grid_step_s > 0:
            raise ValueError(f"grid_step_s must be positive, got {self.grid_step_s}")
        if self.player not in (1, 2):
            raise ValueError(f"player must be 1 or 2, got {self.player}")


@dataclass(frozen=True)
class DbwpSeries:
    """One entry per point where both half-windows fit; parallel tuples."""

    indices: tuple[int, ...]
    elapsed_s: tuple[int, ...]
    win_rate: tuple[float, ...]
    dbwp: tuple[float, ...]
    params: DbwpParams

    def __len__(self) -> int:
        return len(self.indices)


def windowed_win_rate(timeline: MatchTimeline, i: int, w_v: int, player: int = 1) -> float:
    """Fraction of the 2*w_v points in [i-w_v, i+w_v) won by `player`."""
    if w_v < 1:
        raise ValueError(f"w_v must be >= 1, got {w_v}")
    if player not in (1, 2):
        raise ValueError(f"player must be 1 or 2, got {player}")
    n = len(timeline.points)
    if not w_v <= i <= n - w_v:
        raise ValueError(f"index {i} out of range: valid indices are [{w_v}, {n - w_v}]")
    wins = sum(1 for p in timeline.points[i - w_v:i + w_v] if p.point_victor == player)
    return wins / (2 * w_v)


def grid_time_derivative(times_s, values, step_s: float):
    """Interpolate (times, values) onto a uniform grid and differentiate.

    times_s must be strictly increasing with at least two entries; the grid
    starts at times_s[0] with spacing step_s and covers the last knot.
    Returns (grid offsets from times_s[0], derivative at each node).  Central
    differences at interior nodes, one-sided at the two ends.  Every
    arithmetic step is sign-symmetric in `values`.
    """
    m = len(times_s)
    if m < 2:
        raise ValueError(f"need at least 2 knots, got {m}")
    if len(values) != m:
        raise ValueError("times and values length mismatch")
    t0 = times_s[0]
    tau = [t - t0 for t in times_s]
    for a, b in zip(tau, tau[1:]):
        if not b > a:
            raise ValueError("times must be strictly increasing")

    span = float(tau[-1])
    n_nodes = 2
    while (n_nodes - 1) * step_s < span:
        n_nodes += 1
    grid = [k * step_s for k in range(n_nodes)]

    # Piecewise-linear interpolation, clamped beyond the last knot.
    interp = []
    seg = 0
    for g in grid:
        if g >= tau[-1]:
            interp.append(values[-1])
            continue
        while tau[seg + 1] <= g:
            seg += 1
        slope = (values[seg + 1] - values[seg]) / (tau[seg + 1] - tau[seg])
        interp.append(values[seg] + (g - tau[seg]) * slope)

    deriv = [0.0] * n_nodes
    deriv[0] = (interp[1] - interp[0]) / step_s
    deriv[-1] = (interp[-1] - interp[-2]) / step_s
    two_h = 2 * step_s
    for k in range(1, n_nodes - 1):
        deriv[k] = (interp[k + 1] - interp[k - 1]) / two_h
    return grid, deriv


def dbwp_scores(timeline: MatchTimeline, params: DbwpParams | None = None) -> DbwpSeries:
    params = params or DbwpParams()
    params.check()
    n = len(timeline.points)
    if n <= 2 * params.w_v:
        raise ValueError(
            f"timeline has {n} points but the centered window requires at least {2 * params.w_v + 1}"
        )
    w = params.w_v
    lo, hi = w, n - w  # inclusive valid index range

    indices = list(range(lo, hi + 1))
    elapsed = [timeline.points[i].elapsed_s for i in indices]
    # Centered rates drive the derivative; plain rates are reported.
    wins = []
    for i in indices:
        wins.append(sum(1 for p in timeline.points[i - w:i + w] if p.point_victor == params.player))
    centered = [(c - w) / (2 * w) for c in wins]
    rates = [c / (2 * w) for c in wins]

    # Collapse duplicate timestamps by averaging their centered rates.
    knot_t: list[int] = []
    knot_v: list[float] = []
    k = 0
    while k < len(elapsed):
        j = k
        total = 0.0
        while j < len(elapsed) and elapsed[j] == elapsed[k]:
            total += centered[j]
            j += 1
        knot_t.append(elapsed[k])
        knot_v.append(total / (j - k))
        k = j
    if len(knot_t) < 2:
        raise ValueError("need at least 2 distinct elapsed times to differentiate")

    grid, deriv = grid_time_derivative(knot_t, knot_v, params.grid_step_s)
    t0 = knot_t[0]
    last = len(grid) - 1
    out = []
    for t in elapsed:
        node = round((t - t0) / params.grid_step_s)
        out.append(deriv[min(max(node, 0), last)])

    return DbwpSeries(
        indices=tuple(indices),
        elapsed_s=tuple(elapsed),
        win_rate=tuple(rates),
        dbwp=tuple(out),
        params=params,
    )


def write_dbwp_csv(series: DbwpSeries, dest) -> None:
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_dbwp_csv(series, fh)
            return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["point_index", "elapsed_s", "win_rate", "dbwp"])
    for i, t, r, d in zip(series.indices, series.elapsed_s, series.win_rate, series.dbwp):
        writer.writerow([i, t, repr(r), repr(d)])
