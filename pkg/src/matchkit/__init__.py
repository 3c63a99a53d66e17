"""matchkit: point-by-point tennis match analytics and from-scratch learners.

The modules mirror the pipeline: `ingest` loads and validates point-by-point
CSVs, `winjud` and `momentum` score performance and momentum, `dbwp` turns
win rates into a time derivative, `gbtree` and `neural` fit from-scratch
learners on those features, `maml` meta-learns an initialization across
matches, and `cli` ties it all together behind subcommands.
"""

from .dbwp import DbwpParams, DbwpSeries, dbwp_scores
from .gbtree import GbtConfig, GbtModel, grid_search, predict, run_ablation, train_gbt
from .ingest import (
    IngestError,
    MatchTimeline,
    PointRecord,
    SyntheticSpec,
    generate_synthetic_match,
    load_match_csv,
    write_timeline_csv,
)
from .maml import (
    MamlConfig,
    MetaState,
    evaluate_queries,
    fine_tune_and_eval,
    meta_train,
    split_support_query,
)
from .momentum import (
    MomentumConfig,
    MomentumSeries,
    build_feature_matrix,
    fibonacci,
    momentum_series,
)
from .neural import NetConfig, ParallelNet, TrainReport, train_deep_lstm, train_net
from .winjud import WinjudParams, WinjudSeries, best_performance_times, winjud_scores

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "IngestError",
    "MatchTimeline",
    "PointRecord",
    "SyntheticSpec",
    "load_match_csv",
    "write_timeline_csv",
    "generate_synthetic_match",
    "WinjudParams",
    "WinjudSeries",
    "winjud_scores",
    "best_performance_times",
    "MomentumConfig",
    "MomentumSeries",
    "fibonacci",
    "momentum_series",
    "build_feature_matrix",
    "DbwpParams",
    "DbwpSeries",
    "dbwp_scores",
    "GbtConfig",
    "GbtModel",
    "train_gbt",
    "predict",
    "grid_search",
    "run_ablation",
    "NetConfig",
    "ParallelNet",
    "TrainReport",
    "train_net",
    "train_deep_lstm",
    "MamlConfig",
    "MetaState",
    "meta_train",
    "fine_tune_and_eval",
    "evaluate_queries",
    "split_support_query",
]
