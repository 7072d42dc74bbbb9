"""
FedCKD Lab Core Module

Numeric core, models, data, generator, client weighting, contrastive
losses, configuration and the round orchestrator.

The orchestrator is imported from core.orchestrator directly; this
package init only exposes the leaf modules so agents and skills can
import from core without cycles.
"""

from .errors import (
    ConfigurationError,
    DatasetParseError,
    LabError,
    MetricsWriteError,
    RejectedInputError,
    RejectedStateError,
)
from .config import DatasetChoice, ExperimentConfig, Variant, load_config, parse_config

__all__ = [
    "ConfigurationError",
    "DatasetParseError",
    "LabError",
    "MetricsWriteError",
    "RejectedInputError",
    "RejectedStateError",
    "DatasetChoice",
    "ExperimentConfig",
    "Variant",
    "load_config",
    "parse_config",
]
