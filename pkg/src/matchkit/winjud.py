"""Sliding-window performance scores with a serve factor, and per-set peak times.

For each point index i (0-based position in the timeline) with
i >= max(w_v, w_s), player 1's score counts their point wins over the trailing
victor window [i-w_v, i) plus beta times the number of points in the trailing
server window [i-w_s, i) where the opponent served; player 2 symmetrically.
Windows are half-open and strictly in the past, so the score is causal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .ingest import MatchTimeline, format_elapsed

__all__ = [
    "WinjudParams",
    "WinjudSeries",
    "BestTime",
    "winjud_scores",
    "best_performance_times",
    "write_winjud_csv",
]


@dataclass(frozen=True)
class WinjudParams:
    w_v: int = 5
    w_s: int = 5
    beta: float = 0.5

    def check(self) -> None:
        if self.w_v < 1:
            raise ValueError(f"w_v must be >= 1, got {self.w_v}")
        if self.w_s < 1:
            raise ValueError(f"w_s must be >= 1, got {self.w_s}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class WinjudSeries:
    """Scores at every defined index; parallel tuples of equal length."""

    indices: tuple[int, ...]
    elapsed_s: tuple[int, ...]
    score_p1: tuple[float, ...]
    score_p2: tuple[float, ...]
    params: WinjudParams

    def __len__(self) -> int:
        return len(self.indices)


def winjud_scores(timeline: MatchTimeline, params: WinjudParams | None = None) -> WinjudSeries:
    params = params or WinjudParams()
    params.check()
    n = len(timeline.points)
    w_max = max(params.w_v, params.w_s)
    if n <= w_max:
        raise ValueError(
            f"timeline has {n} points but the windows require at least {w_max + 1}"
        )

    victors = [p.point_victor for p in timeline.points]
    servers = [p.server for p in timeline.points]
    # Prefix counts: wins1[i] = # of player-1 point wins among the first i points.
    wins1 = [0] * (n + 1)
    srv1 = [0] * (n + 1)
    for i in range(n):
        wins1[i + 1] = wins1[i] + (victors[i] == 1)
        srv1[i + 1] = srv1[i] + (servers[i] == 1)

    indices, elapsed, s1, s2 = [], [], [], []
    for i in range(w_max, n):
        v1 = wins1[i] - wins1[i - params.w_v]
        v2 = params.w_v - v1
        serve1 = srv1[i] - srv1[i - params.w_s]
        serve2 = params.w_s - serve1
        indices.append(i)
        elapsed.append(timeline.points[i].elapsed_s)
        s1.append(v1 + params.beta * serve2)
        s2.append(v2 + params.beta * serve1)

    return WinjudSeries(
        indices=tuple(indices),
        elapsed_s=tuple(elapsed),
        score_p1=tuple(s1),
        score_p2=tuple(s2),
        params=params,
    )


@dataclass(frozen=True)
class BestTime:
    set_no: int
    player: int
    elapsed_s: int
    elapsed_clock: str
    score: float


def best_performance_times(series: WinjudSeries, timeline: MatchTimeline) -> tuple[BestTime, ...]:
    """Per set and player, the elapsed time of the peak score (earliest on ties).

    Sets whose points all precede the first defined index are omitted.
    """
    if not series.indices:
        raise ValueError("series is empty")
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for i, elapsed, p1, p2 in zip(series.indices, series.elapsed_s, series.score_p1, series.score_p2):
        set_no = timeline.points[i].set_no
        for player, score in ((1, p1), (2, p2)):
            key = (set_no, player)
            if key not in best or score > best[key][0]:
                best[key] = (score, elapsed)
    return tuple(
        BestTime(set_no=s, player=p, elapsed_s=best[(s, p)][1],
                 elapsed_clock=format_elapsed(best[(s, p)][1]), score=best[(s, p)][0])
        for s, p in sorted(best)
    )


def write_winjud_csv(series: WinjudSeries, dest) -> None:
    """Long-form CSV: one row per (point, player), ready for heatmap plotting."""
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_winjud_csv(series, fh)
            return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["point_index", "elapsed_s", "player", "score"])
    for i, elapsed, p1, p2 in zip(series.indices, series.elapsed_s, series.score_p1, series.score_p2):
        writer.writerow([i, elapsed, 1, repr(p1)])
        writer.writerow([i, elapsed, 2, repr(p2)])
