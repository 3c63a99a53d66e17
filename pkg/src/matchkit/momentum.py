"""Strategic and psychological momentum scores plus the model feature matrix.

Strategic momentum is a stateless closed form of the score lead: a set lead of
n multiplies the set baseline by set_factor**n, a game lead likewise, and the
two terms multiply.  Psychological momentum is computed per game: the game's
first point is pinned to 1, every later point carries a signed Fibonacci
weight of the current winning streak (streak length includes the point itself
and counts from the start of the game) plus signed event adjustments.
Positive values favor player 1 throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ingest import MatchTimeline

__all__ = [
    "MomentumConfig",
    "MomentumSeries",
    "FeatureMatrix",
    "FEATURE_SETS",
    "fibonacci",
    "strategic_momentum",
    "psychological_momentum",
    "momentum_series",
    "build_feature_matrix",
    "write_momentum_csv",
]


@dataclass(frozen=True)
class MomentumConfig:
    set_factor: float = 1.5
    game_factor: float = 1.2
    b0_sets: float = 1.0
    b0_games: float = 5.0
    ace_bonus: float = 1.0
    double_fault_penalty: float = -1.0
    unforced_error_penalty: float = -0.5

    def check(self) -> None:
        if self.set_factor <= 1:
            raise ValueError(f"set_factor must be > 1, got {self.set_factor}")
        if self.game_factor <= 1:
            raise ValueError(f"game_factor must be > 1, got {self.game_factor}")
        if self.b0_sets <= 0:
            raise ValueError(f"b0_sets must be > 0, got {self.b0_sets}")
        if self.b0_games <= 0:
            raise ValueError(f"b0_games must be > 0, got {self.b0_games}")


@dataclass(frozen=True)
class MomentumSeries:
    """Per-point momentum values aligned with the timeline (same length)."""

    indices: tuple[int, ...]
    elapsed_s: tuple[int, ...]
    strategic: tuple[float, ...]
    psychological: tuple[float, ...]
    config: MomentumConfig

    def __len__(self) -> int:
        return len(self.indices)


def fibonacci(n: int) -> int:
    """F(1) = F(2) = 1, F(n) = F(n-1) + F(n-2)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    a, b = 1, 1
    for _ in range(n - 1):
        a, b = b, a + b
    return a


def strategic_momentum(timeline: MatchTimeline, config: MomentumConfig | None = None) -> tuple[float, ...]:
    config = config or MomentumConfig()
    config.check()
    out = []
    for p in timeline.points:
        m1 = config.b0_sets * config.set_factor ** (p.p1_sets - p.p2_sets)
        m2 = config.b0_games * config.game_factor ** (p.p1_games - p.p2_games)
        out.append(m1 * m2)
    return tuple(out)


def psychological_momentum(timeline: MatchTimeline, config: MomentumConfig | None = None) -> tuple[float, ...]:
    config = config or MomentumConfig()
    config.check()
    out: list[float] = []
    game_key = None
    count1 = count2 = 0
    for p in timeline.points:
        key = (p.set_no, p.game_no)
        first = key != game_key
        if first:
            game_key = key
            count1 = count2 = 0
        if p.point_victor == 1:
            count1, count2 = count1 + 1, 0
        else:
            count1, count2 = 0, count2 + 1
        if first:
            out.append(1.0)  # pinned; the victor still seeds the streak counters
            continue
        streak = float(fibonacci(count1)) if count1 > 0 else -float(fibonacci(count2))
        ace = config.ace_bonus * (float(p.p1_ace) - float(p.p2_ace))
        df = config.double_fault_penalty * (float(p.p1_double_fault) - float(p.p2_double_fault))
        ue = config.unforced_error_penalty * (float(p.p1_unf_err) - float(p.p2_unf_err))
        out.append(streak + ace + df + ue)
    return tuple(out)


def momentum_series(timeline: MatchTimeline, config: MomentumConfig | None = None) -> MomentumSeries:
    config = config or MomentumConfig()
    return MomentumSeries(
        indices=tuple(range(len(timeline.points))),
        elapsed_s=tuple(p.elapsed_s for p in timeline.points),
        strategic=strategic_momentum(timeline, config),
        psychological=psychological_momentum(timeline, config),
        config=config,
    )


# Ablation variants: which momentum columns stay in the feature matrix.
FEATURE_SETS = {
    "none": (),
    "psych_only": ("psychological",),
    "strat_only": ("strategic",),
    "both": ("psychological", "strategic"),
}

_BASE_FEATURES = ("server_signed", "p1_distance_run", "p2_distance_run",
                  "rally_count", "speed_mph")


@dataclass(frozen=True)
class FeatureMatrix:
    x: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("feature matrix and labels disagree on row count")
        if self.x.shape[1] != len(self.names):
            raise ValueError("feature matrix and names disagree on column count")


def build_feature_matrix(timeline: MatchTimeline, momentum: MomentumSeries,
                         feature_set: str = "both") -> FeatureMatrix:
    """Assemble per-point features and the player-1 point-win label.

    Momentum columns come first (per the ablation variant), then server
    encoded as +1/-1, both distances, rally count, and serve speed with
    missing values imputed by the per-match mean (0.0 if all missing).
    """
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature_set {feature_set!r}; expected one of {sorted(FEATURE_SETS)}")
    n = len(timeline.points)
    if len(momentum) != n:
        raise ValueError(f"momentum series has {len(momentum)} entries for {n} points")

    momentum_cols = {
        "psychological": np.asarray(momentum.psychological, dtype=np.float64),
        "strategic": np.asarray(momentum.strategic, dtype=np.float64),
    }
    speeds = np.array([np.nan if p.speed_mph is None else p.speed_mph for p in timeline.points])
    known = speeds[~np.isnan(speeds)]
    fill = float(known.mean()) if known.size else 0.0
    speeds = np.where(np.isnan(speeds), fill, speeds)

    base_cols = {
        "server_signed": np.array([1.0 if p.server == 1 else -1.0 for p in timeline.points]),
        "p1_distance_run": np.array([p.p1_distance_run for p in timeline.points]),
        "p2_distance_run": np.array([p.p2_distance_run for p in timeline.points]),
        "rally_count": np.array([float(p.rally_count) for p in timeline.points]),
        "speed_mph": speeds,
    }

    names = FEATURE_SETS[feature_set] + _BASE_FEATURES
    columns = [momentum_cols.get(name, base_cols.get(name)) for name in names]
    x = np.column_stack(columns)
    y = np.array([1.0 if p.point_victor == 1 else 0.0 for p in timeline.points])
    return FeatureMatrix(x=x, y=y, names=names)


def write_momentum_csv(series: MomentumSeries, dest) -> None:
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_momentum_csv(series, fh)
            return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["point_index", "elapsed_s", "strategic", "psychological"])
    for i, t, s, m in zip(series.indices, series.elapsed_s, series.strategic, series.psychological):
        writer.writerow([i, t, repr(s), repr(m)])
