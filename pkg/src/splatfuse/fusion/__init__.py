"""Cyclic fusion training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import FusionConfig, LearningRates
from .optim import Adam
from .trainer import (CycleReport, FusionTrainer, SupervisionSet, View, dataset_views,
                      expand_content, fusion_cycle, init_from_points, run_training, scene_extent,
                      train_step)
