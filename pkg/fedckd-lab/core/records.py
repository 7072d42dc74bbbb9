"""
Round records and their flat metrics-row form.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import RejectedInputError

METRICS_COLUMNS = (
    "round",
    "status",
    "participants",
    "train_loss_mean",
    "client_train_losses",
    "acc_mean",
    "acc_std",
    "global_acc",
    "distill_loss",
    "generator_loss",
    "f_ideal",
    "f_partial",
    "delta_f",
    "pseudo_label_js",
    "missing_classes",
    "client_weights",
    "data_proportions",
)

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"


def format_number(value: Optional[float]) -> str:
    """Six significant digits; None is an empty cell."""
    if value is None:
        return ""
    return f"{float(value):.6g}"


def _join(values: Sequence[Any], numeric: bool = True) -> str:
    return ";".join(format_number(v) if numeric else str(v) for v in values)


@dataclass
class RoundRecord:
    """Everything measured in one communication round."""
    round_index: int
    participants: List[int]
    status: str = STATUS_OK
    client_train_losses: List[float] = field(default_factory=list)
    client_accuracies: List[float] = field(default_factory=list)
    global_accuracy: Optional[float] = None
    distill_loss: Optional[float] = None
    generator_loss: Optional[float] = None
    f_ideal: Optional[float] = None
    f_partial: Optional[float] = None
    delta_f: Optional[float] = None
    pseudo_label_js: Optional[float] = None
    missing_classes: List[int] = field(default_factory=list)
    client_weights: List[float] = field(default_factory=list)
    data_proportions: List[float] = field(default_factory=list)
    wall_seconds: float = 0.0

    def __post_init__(self):
        for value in list(self.client_accuracies) + [self.global_accuracy]:
            if value is not None and not 0.0 <= value <= 1.0:
                raise RejectedInputError(f"accuracy {value} outside [0, 1]")

    @property
    def train_loss_mean(self) -> Optional[float]:
        return float(np.mean(self.client_train_losses)) if self.client_train_losses else None

    @property
    def acc_mean(self) -> Optional[float]:
        return float(np.mean(self.client_accuracies)) if self.client_accuracies else None

    @property
    def acc_std(self) -> Optional[float]:
        return float(np.std(self.client_accuracies)) if self.client_accuracies else None

    def to_row(self) -> List[str]:
        """Cells in METRICS_COLUMNS order."""
        return [
            str(self.round_index),
            self.status,
            _join(self.participants, numeric=False),
            format_number(self.train_loss_mean),
            _join(self.client_train_losses),
            format_number(self.acc_mean),
            format_number(self.acc_std),
            format_number(self.global_accuracy),
            format_number(self.distill_loss),
            format_number(self.generator_loss),
            format_number(self.f_ideal),
            format_number(self.f_partial),
            format_number(self.delta_f),
            format_number(self.pseudo_label_js),
            _join(self.missing_classes, numeric=False),
            _join(self.client_weights),
            _join(self.data_proportions),
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "round": self.round_index,
            "status": self.status,
            "participants": list(self.participants),
            "train_loss_mean": self.train_loss_mean,
            "client_train_losses": list(self.client_train_losses),
            "acc_mean": self.acc_mean,
            "acc_std": self.acc_std,
            "global_acc": self.global_accuracy,
            "distill_loss": self.distill_loss,
            "generator_loss": self.generator_loss,
            "f_ideal": self.f_ideal,
            "f_partial": self.f_partial,
            "delta_f": self.delta_f,
            "pseudo_label_js": self.pseudo_label_js,
            "missing_classes": list(self.missing_classes),
            "client_weights": list(self.client_weights),
            "data_proportions": list(self.data_proportions),
        }


@dataclass
class RunSummary:
    """Final evaluation of every client and the global model."""
    status: str
    rounds_completed: int
    client_accuracies: List[float] = field(default_factory=list)
    global_accuracy: float = 0.0
    final_distill_loss: Optional[float] = None
    mean_participation: float = 0.0
    stop_reason: str = ""

    @property
    def acc_mean(self) -> float:
        return float(np.mean(self.client_accuracies)) if self.client_accuracies else 0.0

    @property
    def acc_std(self) -> float:
        return float(np.std(self.client_accuracies)) if self.client_accuracies else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "rounds_completed": self.rounds_completed,
            "acc_mean": self.acc_mean,
            "acc_std": self.acc_std,
            "global_accuracy": self.global_accuracy,
            "final_distill_loss": self.final_distill_loss,
            "mean_participation": self.mean_participation,
            "stop_reason": self.stop_reason,
        }
