"""
Configuration for experiments.

A run is fully described by a flat key/value document (YAML mapping, no
nesting). Every key has a documented default except dataset, clients and
seed. Validation happens before any model is built; every failure becomes
a ConfigurationError naming the offending key(s).

Environment overrides use the FEDCKD_<KEY> form (an optional .env file is
read first).
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .contrastive import ContrastiveConfig
from .errors import ConfigurationError
from .ipwd import IpwdConfig
from .models import HeterogeneityMode, ModelFamily

ENV_PREFIX = "FEDCKD_"
DEFAULT_PARTICIPANTS = 10


class DatasetChoice(str, Enum):
    SYNTHETIC = "synthetic"
    FASHION_IDX = "fashion-idx"
    UCIHAR = "ucihar"


class Variant(str, Enum):
    """Protocol variant: full method, the two ablations, or the two-round baseline."""
    FULL = "full"
    NO_IPWD = "no_ipwd"
    NO_BCL = "no_bcl"
    BASELINE = "baseline"


class ExperimentConfig(BaseModel):
    """Every knob of one experiment. Keys are flat; see README for the full table."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True, use_enum_values=False)

    # required
    dataset: DatasetChoice
    clients: int = Field(ge=1)
    seed: int = Field(ge=0)

    # federation
    participants: int = Field(default=DEFAULT_PARTICIPANTS, ge=1)
    rounds: int = Field(default=100, ge=1)
    dirichlet_alpha: float = Field(default=0.1, gt=0)
    heterogeneity: HeterogeneityMode = HeterogeneityMode.HETEROGENEOUS
    variant: Variant = Variant.FULL
    global_family: ModelFamily = ModelFamily.MLP_A
    workers: int = Field(default=1, ge=1)

    # client weighting
    ipwd_alpha: float = Field(default=1.0, ge=0)
    ipwd_beta: float = Field(default=1.0, ge=0)
    lambda_slope: float = Field(default=5.0, gt=0)
    theta_threshold: float = 0.5
    frequency_floor: Optional[float] = Field(default=None, gt=0)

    # contrastive
    temperature: float = Field(default=0.5, gt=0)
    lambda_decode: float = Field(default=1.0, ge=0)
    layer_weights: Optional[List[float]] = None
    contrastive_coefficient: float = Field(default=1.0, ge=0)
    contrastive_depth: int = Field(default=2, ge=1)
    history_depth: int = Field(default=1, ge=0, le=1)

    # optimization
    lr: float = Field(default=0.001, ge=0)
    generator_lr: float = Field(default=0.001, ge=0)
    local_epochs: int = Field(default=1, ge=0)
    batch_size: int = Field(default=32, ge=1)
    kd_weight: float = Field(default=1.0, ge=0)
    pseudo_batch: int = Field(default=64, ge=1)
    generator_steps: int = Field(default=10, ge=0)
    distill_steps: int = Field(default=10, ge=0)
    grad_clip: float = Field(default=0.0, ge=0)

    # architecture
    feature_extent: int = Field(default=16, ge=1)
    noise_extent: int = Field(default=16, ge=1)
    embed_extent: int = Field(default=8, ge=1)

    # data
    data_dir: Optional[str] = None
    class_count: int = Field(default=3, ge=1)
    input_extent: int = Field(default=10, ge=1)
    separation: float = Field(default=4.0, gt=0)
    synthetic_samples: int = Field(default=3000, ge=1)
    synthetic_test_samples: int = Field(default=900, ge=1)

    # output
    output_dir: str = "runs/default"
    checkpoint: bool = True
    full_scale: bool = False
    log_level: str = "INFO"

    @model_validator(mode="before")
    @classmethod
    def _fill_participants(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("participants") is None and isinstance(data.get("clients"), int):
            data = dict(data)
            data["participants"] = min(DEFAULT_PARTICIPANTS, data["clients"])
        return data

    @property
    def participation_rate(self) -> float:
        return self.participants / self.clients

    def ipwd_config(self) -> IpwdConfig:
        return IpwdConfig(
            ipwd_alpha=self.ipwd_alpha,
            ipwd_beta=self.ipwd_beta,
            lambda_slope=self.lambda_slope,
            theta_threshold=self.theta_threshold,
            frequency_floor=self.frequency_floor,
        )

    def contrastive_config(self) -> ContrastiveConfig:
        """Contrastive settings with the variant applied (no_bcl / baseline switch it off)."""
        coefficient = self.contrastive_coefficient
        if self.variant in (Variant.NO_BCL, Variant.BASELINE):
            coefficient = 0.0
        return ContrastiveConfig(
            temperature=self.temperature,
            lambda_decode=self.lambda_decode,
            layer_weights=tuple(self.layer_weights) if self.layer_weights is not None else None,
            coefficient=coefficient,
            negative_count=self.history_depth,
            depth=self.contrastive_depth,
        )

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _check_constraints(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.participants > cfg.clients:
        raise ConfigurationError(
            f"participants ({cfg.participants}) exceeds clients ({cfg.clients})",
            keys=["participants", "clients"],
        )
    if cfg.dataset in (DatasetChoice.FASHION_IDX, DatasetChoice.UCIHAR) and not cfg.data_dir:
        raise ConfigurationError(f"dataset {cfg.dataset.value} needs a data directory", keys=["data_dir", "dataset"])
    if cfg.layer_weights is not None and len(cfg.layer_weights) != cfg.contrastive_depth:
        raise ConfigurationError(
            f"{len(cfg.layer_weights)} layer weights for depth {cfg.contrastive_depth}",
            keys=["layer_weights", "contrastive_depth"],
        )
    if cfg.layer_weights is not None and any(w < 0 for w in cfg.layer_weights):
        raise ConfigurationError("layer weights must be >= 0", keys=["layer_weights"])
    return cfg


def config_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a flat mapping into an ExperimentConfig."""
    if not isinstance(data, Mapping):
        raise ConfigurationError("configuration document must be a key/value mapping")
    nested = [key for key, value in data.items() if isinstance(value, Mapping)]
    if nested:
        raise ConfigurationError("nested sections are not supported", keys=nested)
    try:
        cfg = ExperimentConfig.model_validate(dict(data))
    except ValidationError as e:
        keys = [".".join(str(part) for part in err["loc"]) or "<document>" for err in e.errors()]
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigurationError(details, keys=keys) from e
    return _check_constraints(cfg)


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat YAML key/value document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"not a valid key/value document: {e}") from e
    return config_from_mapping(data or {})


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}", keys=["config"]) from e
    return parse_config(text)


def parse_overrides(assignments: List[str]) -> Dict[str, Any]:
    """Turn ["key=value", ...] into a mapping; values are YAML scalars."""
    overrides: Dict[str, Any] = {}
    for assignment in assignments:
        key, sep, raw = assignment.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override {assignment!r} is not key=value", keys=[assignment])
        overrides[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
    return overrides


def apply_overrides(cfg: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    if not overrides:
        return cfg
    merged = cfg.to_dict()
    merged.update(overrides)
    if "participants" not in overrides and isinstance(overrides.get("clients"), int):
        merged["participants"] = min(cfg.participants, overrides["clients"])
    return config_from_mapping(merged)


def env_overrides(environ: Optional[Mapping[str, str]] = None, dotenv_path: Optional[str] = None) -> Dict[str, Any]:
    """Collect FEDCKD_<KEY> variables for known keys."""
    if environ is None:
        load_dotenv(dotenv_path)
        environ = os.environ
    known = set(ExperimentConfig.model_fields)
    overrides: Dict[str, Any] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key in known:
            overrides[key] = yaml.safe_load(raw) if raw.strip() else None
    return overrides
