"""Geometric graph contrastive learning for molecules."""

from ._core import (
    CheckpointError,
    ConfigError,
    Dataset,
    Error,
    GeometryError,
    ParseError,
    ShapeError,
    TaskType,
    contrastive_loss,
    default_config,
    encode,
    finetune,
    load_checkpoint,
    load_dataset,
    parse_dataset,
    parse_task_type,
    pretrain,
    rbf_expand,
    retrieval_top1,
    split_dataset,
    synth_dataset,
)

__version__ = "0.1.0"
