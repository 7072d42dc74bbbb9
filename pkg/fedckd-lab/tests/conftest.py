"""
Pytest fixtures shared by the suites.
"""

import pytest

from core.config import ExperimentConfig, config_from_mapping


TINY_RUN = {
    "dataset": "synthetic",
    "clients": 6,
    "participants": 3,
    "seed": 7,
    "rounds": 3,
    "class_count": 3,
    "input_extent": 6,
    "synthetic_samples": 240,
    "synthetic_test_samples": 90,
    "pseudo_batch": 12,
    "generator_steps": 2,
    "distill_steps": 2,
    "batch_size": 16,
    "lr": 0.05,
    "generator_lr": 0.01,
    "feature_extent": 6,
    "noise_extent": 4,
    "embed_extent": 3,
}


@pytest.fixture
def tiny_run_settings(tmp_path):
    """Flat settings for a three-round synthetic run writing under tmp_path."""
    return {**TINY_RUN, "output_dir": str(tmp_path / "run")}


@pytest.fixture
def tiny_config(tiny_run_settings) -> ExperimentConfig:
    return config_from_mapping(tiny_run_settings)
