"""
Round diagnostics.

Data proportions p_i, the ideal objective F (every client counted
equally), the partial objective F_t (participants weighted by p_i),
their gap, and how far the pseudo-label distribution has drifted from
the training label distribution.
"""

from dataclasses import dataclass, field
from typing import List, Mapping, Sequence

import numpy as np

from .datasets import Dataset
from .errors import RejectedInputError
from .generator import PseudoBatch, ensemble_argmax
from .ipwd import distillation_gap, label_divergence
from .models import SplitModel, predict_logits


@dataclass
class RoundDiagnostics:
    data_proportions: List[float] = field(default_factory=list)
    f_ideal: float = 0.0
    f_partial: float = 0.0
    delta_f: float = 0.0
    pseudo_label_js: float = 0.0


def evaluate(model: SplitModel, test: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    if len(test) == 0:
        raise RejectedInputError("test split is empty")
    predicted = np.argmax(predict_logits(model, test.features), axis=1)
    return float(np.mean(predicted == test.labels))


def data_proportions(sizes: Sequence[int]) -> np.ndarray:
    """p_i = |D_i| / sum_j |D_j|."""
    sizes = np.asarray(sizes, dtype=np.float64)
    total = sizes.sum()
    if sizes.size == 0 or total <= 0:
        raise RejectedInputError("client sizes must be nonempty with a positive total")
    return sizes / total


def ideal_objective(kd_losses: Sequence[float]) -> float:
    return float(np.mean(kd_losses))


def partial_objective(kd_losses: Mapping[int, float], proportions: np.ndarray, participants: Sequence[int]) -> float:
    selected = np.array([proportions[i] for i in participants], dtype=np.float64)
    losses = np.array([kd_losses[i] for i in participants], dtype=np.float64)
    return float(np.dot(selected / selected.sum(), losses))


def label_histogram_of(labels: np.ndarray, class_count: int) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=class_count).astype(np.float64)
    total = counts.sum()
    return counts / total if total > 0 else np.full(class_count, 1.0 / class_count)


def compute_diagnostics(
    global_model: SplitModel,
    client_models: Sequence[SplitModel],
    sizes: Sequence[int],
    participants: Sequence[int],
    batch: PseudoBatch,
    teacher_weights: Sequence[float],
    train_histogram: np.ndarray,
) -> RoundDiagnostics:
    """
    Evaluate F, F_t and the pseudo-label divergence on one pseudo-batch.

    L_KD,i is the mean KL between the global model and client i on the
    batch; the ensemble for the pseudo-label histogram is the round's
    participants under `teacher_weights`.
    """
    if len(client_models) != len(sizes):
        raise RejectedInputError(f"{len(client_models)} client models for {len(sizes)} sizes")
    proportions = data_proportions(sizes)
    kd_losses = {
        client_id: distillation_gap(global_model, model, batch.samples)
        for client_id, model in enumerate(client_models)
    }
    f_ideal = ideal_objective([kd_losses[i] for i in range(len(client_models))])
    f_partial = partial_objective(kd_losses, proportions, participants)

    teachers = [client_models[i] for i in participants]
    pseudo_labels = ensemble_argmax(batch, teachers, teacher_weights)
    histogram = label_histogram_of(pseudo_labels, train_histogram.shape[0])

    return RoundDiagnostics(
        data_proportions=[float(p) for p in proportions],
        f_ideal=f_ideal,
        f_partial=f_partial,
        delta_f=f_ideal - f_partial,
        pseudo_label_js=label_divergence(histogram, train_histogram),
    )
