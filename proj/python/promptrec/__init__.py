"""Personalized prompt-based recommendation for cold-start users."""

from ._core import (
    CheckpointError,
    Config,
    ConfigError,
    DataError,
    Dataset,
    Error,
    ModelState,
    NumericError,
    SyntheticData,
    bpr_loss,
    case_auc,
    evaluate,
    f1_score,
    generate_synthetic,
    hit_at_n,
    info_nce,
    load_checkpoint,
    load_dataset,
    ndcg_at_n,
    pretrain,
    rank_case,
    run_cli,
    synthetic_dataset,
    tune,
)

__all__ = [
    "CheckpointError",
    "Config",
    "ConfigError",
    "DataError",
    "Dataset",
    "Error",
    "ModelState",
    "NumericError",
    "SyntheticData",
    "bpr_loss",
    "case_auc",
    "evaluate",
    "f1_score",
    "generate_synthetic",
    "hit_at_n",
    "info_nce",
    "load_checkpoint",
    "load_dataset",
    "ndcg_at_n",
    "pretrain",
    "rank_case",
    "run_cli",
    "synthetic_dataset",
    "tune",
]
