from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_tensors,
    save_checkpoint,
    save_tensors,
)
from .losses import (
    batch_losses,
    euclidean,
    loss_atag,
    loss_av,
    loss_ce,
    loss_regular,
    loss_vtag,
    mse,
    total_loss,
    triplet,
)
from .trainer import (
    ModelBundle,
    PretrainConfig,
    TrainConfig,
    TrainError,
    fit,
    generic_extractors,
    grid_search,
    load_bundle,
    new_bundle,
    pretrain_extractors,
    save_bundle,
    tag_embedding,
)

__all__ = [
    "CheckpointError", "load_checkpoint", "load_tensors", "save_checkpoint",
    "save_tensors", "batch_losses", "euclidean", "loss_atag", "loss_av",
    "loss_ce", "loss_regular", "loss_vtag", "mse", "total_loss", "triplet",
    "ModelBundle", "PretrainConfig", "TrainConfig", "TrainError", "fit",
    "generic_extractors", "grid_search", "load_bundle", "new_bundle",
    "pretrain_extractors", "save_bundle", "tag_embedding",
]
