"""
Inverse Probability Weighted Distillation

Client weights from participation frequency and label divergence,
logistic sample weights from ensemble confidence, and the weighted
KL distillation objective with its server-side SGD step.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from .errors import ConfigurationError, RejectedInputError, RejectedStateError
from .models import SplitModel, predict_logits
from .numcore import LOG_EPSILON, backward, clip_tape, forward, kl_rows, sgd_step, softmax

if TYPE_CHECKING:
    from .generator import PseudoBatch

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class IpwdConfig:
    """Weighting hyperparameters. frequency_floor=None means 1 / (2T)."""
    ipwd_alpha: float = 1.0
    ipwd_beta: float = 1.0
    lambda_slope: float = 5.0
    theta_threshold: float = 0.5
    frequency_floor: Optional[float] = None

    def __post_init__(self):
        if self.ipwd_alpha < 0:
            raise ConfigurationError("must be >= 0", keys=["ipwd_alpha"])
        if self.ipwd_beta < 0:
            raise ConfigurationError("must be >= 0", keys=["ipwd_beta"])
        if self.lambda_slope <= 0:
            raise ConfigurationError("must be > 0", keys=["lambda_slope"])
        if self.frequency_floor is not None and self.frequency_floor <= 0:
            raise ConfigurationError("must be > 0", keys=["frequency_floor"])

    def floor_for(self, total_rounds: int) -> float:
        if self.frequency_floor is not None:
            return self.frequency_floor
        return 1.0 / (2.0 * max(total_rounds, 1))


@dataclass
class ParticipationLedger:
    """Participant sets C_t for every elapsed round."""
    participants_per_round: int
    total_rounds: int
    rounds: List[Tuple[int, ...]] = field(default_factory=list)
    _counts: Dict[int, int] = field(default_factory=dict, repr=False)

    def record(self, participants: Sequence[int]) -> None:
        selected = tuple(int(i) for i in participants)
        if len(selected) != self.participants_per_round or len(set(selected)) != len(selected):
            raise RejectedStateError(
                f"round set {selected} does not have {self.participants_per_round} distinct clients"
            )
        self.rounds.append(selected)
        for client_id in selected:
            self._counts[client_id] = self._counts.get(client_id, 0) + 1

    def count(self, client_id: int) -> int:
        return self._counts.get(client_id, 0)

    def __len__(self) -> int:
        return len(self.rounds)


@dataclass
class ClientWeight:
    """Inputs and outputs of the client weight rule for one participant."""
    client_id: int
    frequency: float
    divergence: float
    raw: float
    normalized: float = 0.0


def participation_frequency(ledger: ParticipationLedger, client_id: int) -> float:
    """Fraction of elapsed rounds that selected `client_id`."""
    if len(ledger) == 0:
        raise RejectedStateError("participation ledger is empty")
    return ledger.count(client_id) / len(ledger)


def label_divergence(p_client: np.ndarray, p_global: np.ndarray) -> float:
    """Jensen-Shannon divergence (nats) between two label histograms."""
    p = np.asarray(p_client, dtype=np.float64)
    q = np.asarray(p_global, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise RejectedInputError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    value = 0.5 * float(kl_rows(p, m)) + 0.5 * float(kl_rows(q, m))
    return min(max(value, 0.0), float(np.log(2.0)))


def client_weights(
    ledger: ParticipationLedger,
    histograms: Mapping[int, np.ndarray],
    cfg: IpwdConfig,
    participants: Sequence[int],
    global_histogram: np.ndarray,
) -> List[ClientWeight]:
    """w_i = alpha / max(pi_i, floor) + beta * delta_i, normalized over participants."""
    if not participants:
        raise RejectedInputError("participant set is empty")
    floor = cfg.floor_for(ledger.total_rounds)
    weights = []
    for client_id in participants:
        frequency = participation_frequency(ledger, client_id)
        divergence = label_divergence(histograms[client_id], global_histogram)
        raw = cfg.ipwd_alpha / max(frequency, floor) + cfg.ipwd_beta * divergence
        weights.append(ClientWeight(int(client_id), frequency, divergence, raw))
    total = sum(w.raw for w in weights)
    if total <= 0:
        logger.warning("client_weights_degenerate", participants=list(participants))
    for w in weights:
        w.normalized = w.raw / total if total > 0 else 1.0 / len(weights)
    return weights


def uniform_weights(participants: Sequence[int]) -> List[ClientWeight]:
    """Equal weights, used when inverse-probability weighting is disabled."""
    share = 1.0 / len(participants)
    return [ClientWeight(int(i), 0.0, 0.0, 1.0, share) for i in participants]


def sample_weight(confidence: np.ndarray, cfg: IpwdConfig) -> np.ndarray:
    """Logistic propensity 1 / (1 + exp(-lambda (s - theta))), evaluated stably."""
    t = cfg.lambda_slope * (np.asarray(confidence, dtype=np.float64) - cfg.theta_threshold)
    out = np.empty_like(t)
    positive = t >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-t[positive]))
    e = np.exp(t[~positive])
    out[~positive] = e / (1.0 + e)
    return out


def ensemble_probs(teacher_probs: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted mean of teacher distributions."""
    if len(teacher_probs) != len(weights) or not teacher_probs:
        raise RejectedInputError("need one weight per teacher and at least one teacher")
    return sum(w * p for w, p in zip(weights, teacher_probs))


def confidence(teacher_probs: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Per-sample max entry of the weighted ensemble distribution."""
    return ensemble_probs(teacher_probs, weights).max(axis=1)


@dataclass
class WeightedKlResult:
    loss: float
    grad_logits: np.ndarray


def weighted_kl_loss(
    student_probs: np.ndarray,
    teacher_probs: Sequence[np.ndarray],
    weights: Sequence[float],
    sample_weights: np.ndarray,
) -> WeightedKlResult:
    """
    sum_k w_k sum_j gamma_j KL(p_student(.|x_j) || p_teacher_k(.|x_j))
    and its gradient with respect to the student logits.
    """
    p = np.asarray(student_probs, dtype=np.float64)
    gammas = np.asarray(sample_weights, dtype=np.float64)
    if p.ndim != 2 or gammas.shape != (p.shape[0],):
        raise RejectedInputError(f"student {p.shape} and sample weights {gammas.shape} do not align")
    if len(teacher_probs) != len(weights) or not teacher_probs:
        raise RejectedInputError("need one weight per teacher and at least one teacher")

    log_p = np.log(np.maximum(p, LOG_EPSILON))
    loss = 0.0
    grad = np.zeros_like(p)
    for w, q in zip(weights, teacher_probs):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != p.shape:
            raise RejectedInputError(f"teacher shape {q.shape} does not match student {p.shape}")
        loss += float(w) * float(np.dot(gammas, kl_rows(p, q)))
        r = log_p - np.log(np.maximum(q, LOG_EPSILON))
        centered = r - np.sum(p * r, axis=1, keepdims=True)
        grad += float(w) * gammas[:, None] * p * centered
    return WeightedKlResult(loss=loss, grad_logits=grad)


def distillation_gap(student: SplitModel, teacher: SplitModel, samples: np.ndarray) -> float:
    """Mean KL(student || teacher) over a batch of samples."""
    p = softmax(predict_logits(student, samples))
    q = softmax(predict_logits(teacher, samples))
    return float(kl_rows(p, q).mean())


@dataclass
class DistillStepResult:
    loss: float
    grad_norm: float


def server_distill_step(
    global_model: SplitModel,
    batch: "PseudoBatch",
    teachers: Sequence[SplitModel],
    weights: Sequence[float],
    lr: float,
    grad_clip: float = 0.0,
) -> DistillStepResult:
    """One SGD step of the global model on the weighted KL objective."""
    if batch.weights is None:
        raise RejectedStateError("pseudo-batch sample weights are not populated")
    teacher_probs = [softmax(predict_logits(t, batch.samples)) for t in teachers]
    layers = global_model.layers
    logits, cache = forward(layers, batch.samples)
    result = weighted_kl_loss(softmax(logits), teacher_probs, weights, batch.weights)
    tape, _ = backward(layers, cache, result.grad_logits)
    norm = tape.global_norm()
    sgd_step(layers, clip_tape(tape, grad_clip), lr)
    return DistillStepResult(loss=result.loss, grad_norm=norm)
