"""Moving-sprite scene generator, manifest/blob datasets and distribution analysis."""

from .analysis import DistributionReport, analyze_distribution, analyze_fields
from .dataset import DatasetWriter, GriddedDataset, load_dataset, write_windows
from .mvm import (VARIABLES, SpriteSceneConfig, audit_sample, bounce_step, generate_mvm, generate_sample,
                  trajectories)
from .sprites import DataError, read_idx_images, write_idx_images

__all__ = [
    "DataError", "DatasetWriter", "DistributionReport", "analyze_distribution", "analyze_fields", "GriddedDataset", "SpriteSceneConfig", "VARIABLES", "audit_sample",
    "bounce_step", "generate_mvm", "generate_sample", "load_dataset", "read_idx_images", "trajectories",
    "write_idx_images", "write_windows",
]
