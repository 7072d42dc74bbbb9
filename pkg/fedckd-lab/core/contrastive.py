"""
Bidirectional contrastive losses.

Encode direction: local features are pulled toward the global model's
features and pushed away from the historical snapshot's.
Decode direction: local classifier outputs are pulled toward the
historical snapshot's and pushed away from the global model's.

Both are InfoNCE over cosine similarities:
    -log(exp(s+/tau) / (exp(s+/tau) + sum_k exp(s_k/tau)))
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, RejectedInputError
from .numcore import cosine_rows


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperature, decode weighting, per-level weights and total-loss coefficient."""
    temperature: float = 0.5
    lambda_decode: float = 1.0
    layer_weights: Optional[Tuple[float, ...]] = None
    coefficient: float = 1.0
    negative_count: int = 1
    depth: int = 2

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigurationError("must be > 0", keys=["temperature"])
        if self.negative_count < 0:
            raise ConfigurationError("must be >= 0", keys=["history_depth"])
        if self.depth < 1:
            raise ConfigurationError("must be >= 1", keys=["contrastive_depth"])
        if self.layer_weights is not None:
            weights = tuple(float(w) for w in self.layer_weights)
            if len(weights) != self.depth:
                raise ConfigurationError(
                    f"{len(weights)} layer weights for depth {self.depth}",
                    keys=["layer_weights", "contrastive_depth"],
                )
            if not all(np.isfinite(w) and w >= 0 for w in weights):
                raise ConfigurationError("layer weights must be finite and >= 0", keys=["layer_weights"])
            object.__setattr__(self, "layer_weights", weights)

    def weights(self) -> Tuple[float, ...]:
        if self.layer_weights is not None:
            return self.layer_weights
        return tuple([1.0 / self.depth] * self.depth)


@dataclass
class InfoNceResult:
    """Mean loss over the batch and gradients for every operand."""
    loss: float
    grad_anchor: np.ndarray
    grad_positive: np.ndarray
    grad_negatives: List[np.ndarray] = field(default_factory=list)


def info_nce(
    anchor: np.ndarray,
    positive: np.ndarray,
    negatives: Sequence[np.ndarray],
    temperature: float,
) -> InfoNceResult:
    anchor = np.asarray(anchor, dtype=np.float64)
    if anchor.ndim != 2 or anchor.shape[0] < 1:
        raise RejectedInputError(f"anchor must be a nonempty 2-D batch, got {anchor.shape}")
    m = anchor.shape[0]

    s_pos, d_anchor_pos, d_positive = cosine_rows(anchor, positive)
    sims = [s_pos]
    anchor_grads = [d_anchor_pos]
    other_grads = []
    for negative in negatives:
        s_neg, d_anchor_neg, d_negative = cosine_rows(anchor, negative)
        sims.append(s_neg)
        anchor_grads.append(d_anchor_neg)
        other_grads.append(d_negative)

    logits = np.stack(sims, axis=1) / temperature
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    loss = float(np.mean(lse - logits[:, 0]))

    soft = np.exp(logits - lse[:, None])
    d_sims = soft / (temperature * m)
    d_sims[:, 0] -= 1.0 / (temperature * m)

    grad_anchor = sum(d_sims[:, [k]] * g for k, g in enumerate(anchor_grads))
    grad_positive = d_sims[:, [0]] * d_positive
    grad_negatives = [d_sims[:, [k + 1]] * g for k, g in enumerate(other_grads)]
    return InfoNceResult(max(loss, 0.0), grad_anchor, grad_positive, grad_negatives)


def encode_contrastive_loss(
    z_local: np.ndarray,
    z_global: np.ndarray,
    z_history: Sequence[np.ndarray],
    temperature: float,
) -> InfoNceResult:
    """Positive: global features. Negatives: historical features (K = len(z_history))."""
    return info_nce(z_local, z_global, z_history, temperature)


def decode_contrastive_loss(
    h_local: np.ndarray,
    h_history: np.ndarray,
    h_global: Sequence[np.ndarray],
    temperature: float,
) -> InfoNceResult:
    """Positive: historical logits. Negatives: global logits (K = len(h_global))."""
    return info_nce(h_local, h_history, h_global, temperature)


def multilayer_combine(
    encode_losses: Sequence[float],
    decode_losses: Sequence[float],
    cfg: ContrastiveConfig,
) -> float:
    """sum_l lambda_l (L_enc,l + lambda_decode * L_dec,l)."""
    weights = cfg.weights()
    if len(encode_losses) != len(decode_losses) or len(encode_losses) != len(weights):
        raise RejectedInputError(
            f"{len(encode_losses)} encode / {len(decode_losses)} decode losses for {len(weights)} levels"
        )
    return float(sum(
        w * (enc + cfg.lambda_decode * dec)
        for w, enc, dec in zip(weights, encode_losses, decode_losses)
    ))


def total_local_loss(kd_loss: float, contrastive_loss: float, coefficient: float) -> float:
    return kd_loss + coefficient * contrastive_loss
