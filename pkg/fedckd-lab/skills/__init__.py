"""
Lab Skills Module

Skills are ATOMIC artifact writers.
They DO NOT train.
They DO NOT loop over rounds.

Each skill:
- Takes arguments
- Writes one kind of artifact
- Returns structured output
"""

from .base_skill import BaseSkill, SkillResult
from .write_metrics import MetricsWriter, WriteMetrics, manifest_path_for, write_manifest, write_metrics
from .dump_features import DumpFeatures, dump_features
from .save_checkpoints import SaveCheckpoints, load_checkpoint_models, save_checkpoints

__all__ = [
    "BaseSkill",
    "SkillResult",
    "MetricsWriter",
    "WriteMetrics",
    "manifest_path_for",
    "write_manifest",
    "write_metrics",
    "DumpFeatures",
    "dump_features",
    "SaveCheckpoints",
    "load_checkpoint_models",
    "save_checkpoints",
]
