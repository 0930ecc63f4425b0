"""Two-stage training with momentum shadows, the end-to-end baseline, and checkpoints."""

from .checkpoint import (Checkpoint, CheckpointError, ConfigMismatch, CorruptManifest, MissingBlob,
                         ShapeMismatch, check_config, load_checkpoint, restore, save_checkpoint)
from .config import TrainConfig
from .loop import HISTORY_FIELDS, fit, read_history, split_mse
from .momentum import momentum_update
from .steps import (NumericalError, StageLosses, StepReport, make_optimizer, train_step, train_step_e2e,
                    two_stage_losses)

__all__ = [
    "Checkpoint", "CheckpointError", "ConfigMismatch", "CorruptManifest", "HISTORY_FIELDS", "MissingBlob",
    "NumericalError", "ShapeMismatch", "StageLosses", "StepReport", "TrainConfig", "check_config", "fit",
    "load_checkpoint", "make_optimizer", "momentum_update", "read_history", "restore", "save_checkpoint",
    "split_mse", "train_step", "train_step_e2e", "two_stage_losses",
]
