"""
Client Agent

RESPONSIBILITY: One client's local update for one round.

The local objective on every minibatch is
    CE(local data) + kd_weight * KD(local || global on pseudo-samples)
    + coefficient * (bidirectional contrastive loss on pseudo-samples)

Encoder levels (counted from the feature output backwards) carry the
encode-direction loss against the global model's activations; the
classifier level carries the decode-direction loss, whose positive is
the snapshot classifier and whose negative is the global classifier,
both applied to the local features.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np

from core.config import ExperimentConfig, Variant
from core.contrastive import (
    ContrastiveConfig,
    decode_contrastive_loss,
    encode_contrastive_loss,
    multilayer_combine,
    total_local_loss,
)
from core.datasets import Dataset
from core.diagnostics import evaluate
from core.errors import RejectedStateError
from core.generator import PseudoBatch
from core.ipwd import weighted_kl_loss
from core.models import SplitModel, encode, predict_logits
from core.numcore import (
    GradientTape,
    backward,
    clip_tape,
    cross_entropy,
    forward,
    sgd_step,
    softmax,
)
from state.federation_store import ClientState

from .base_agent import AgentContext, AgentResult, AgentState, BaseAgent

CLIENT_STREAM = 0xC11E


@dataclass(frozen=True)
class LocalTrainConfig:
    """Local optimisation settings shared by every client in a run."""
    epochs: int = 1
    batch_size: int = 32
    kd_weight: float = 1.0
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    grad_clip: float = 0.0

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig) -> "LocalTrainConfig":
        kd_weight = 0.0 if cfg.variant is Variant.BASELINE else cfg.kd_weight
        return cls(
            epochs=cfg.local_epochs,
            batch_size=cfg.batch_size,
            kd_weight=kd_weight,
            contrastive=cfg.contrastive_config(),
            grad_clip=cfg.grad_clip,
        )

    @property
    def uses_pseudo_batch(self) -> bool:
        return self.kd_weight > 0.0 or self.contrastive.coefficient > 0.0


@dataclass
class LocalObjective:
    """Value of the local objective on one minibatch and its gradient tape."""
    loss: float
    cross_entropy: float
    kd: float
    contrastive: float
    tape: GradientTape


@dataclass
class LocalUpdateResult:
    client_id: int
    losses: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.losses)

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses)) if self.losses else 0.0


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    """Private random stream for one client in one round."""
    return np.random.default_rng(np.random.SeedSequence([seed, CLIENT_STREAM, round_index, client_id]))


def minibatches(count: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def train_local_ce(
    model: SplitModel,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    grad_clip: float = 0.0,
) -> List[float]:
    """Plain minibatch cross-entropy training; returns the per-step losses."""
    losses: List[float] = []
    layers = model.layers
    for _ in range(epochs):
        for idx in minibatches(x.shape[0], batch_size, rng):
            logits, cache = forward(layers, x[idx])
            loss, d_logits = cross_entropy(logits, y[idx])
            tape, _ = backward(layers, cache, d_logits)
            sgd_step(layers, clip_tape(tape, grad_clip), lr)
            losses.append(loss)
    return losses


def _pseudo_sample_terms(
    model: SplitModel,
    snapshot: Optional[SplitModel],
    global_model: SplitModel,
    samples: np.ndarray,
    tc: LocalTrainConfig,
):
    enc = encode(model, samples)
    z = enc.features
    logits, classifier_cache = forward(model.classifier, z)
    d_logits = np.zeros_like(logits)
    d_z = np.zeros_like(z)
    extra: Dict[int, np.ndarray] = {}

    kd = 0.0
    if tc.kd_weight > 0.0:
        teacher = softmax(predict_logits(global_model, samples))
        m = samples.shape[0]
        result = weighted_kl_loss(softmax(logits), [teacher], [1.0], np.full(m, 1.0 / m))
        kd = result.loss
        d_logits += tc.kd_weight * result.grad_logits

    contrastive = 0.0
    cc = tc.contrastive
    if cc.coefficient > 0.0 and snapshot is not None:
        weights = cc.weights()
        encode_losses = [0.0] * cc.depth
        decode_losses = [0.0] * cc.depth
        with_history = cc.negative_count > 0
        global_enc = encode(global_model, samples)
        snapshot_enc = encode(snapshot, samples) if with_history else None

        for level in range(cc.depth - 1):
            local_index = len(model.encoder) - 1 - level
            global_index = len(global_model.encoder) - 1 - level
            if local_index < 0 or global_index < 0:
                continue
            anchor = enc.intermediates[local_index]
            positive = global_enc.intermediates[global_index]
            if positive.shape != anchor.shape:
                continue
            negatives = [snapshot_enc.intermediates[local_index]] if with_history else []
            result = encode_contrastive_loss(anchor, positive, negatives, cc.temperature)
            encode_losses[level] = result.loss
            extra[local_index] = extra.get(local_index, 0.0) + cc.coefficient * weights[level] * result.grad_anchor

        if with_history:
            h_history, history_cache = forward(snapshot.classifier, z)
            h_global, global_cache = forward(global_model.classifier, z)
            result = decode_contrastive_loss(logits, h_history, [h_global], cc.temperature)
            decode_losses[-1] = result.loss
            scale = cc.coefficient * weights[-1] * cc.lambda_decode
            d_logits += scale * result.grad_anchor
            # frozen classifiers still pass gradient back to the local features
            _, dz_history = backward(snapshot.classifier, history_cache, scale * result.grad_positive)
            _, dz_global = backward(global_model.classifier, global_cache, scale * result.grad_negatives[0])
            d_z += dz_history + dz_global

        contrastive = multilayer_combine(encode_losses, decode_losses, cc)

    classifier_tape, dz_classifier = backward(model.classifier, classifier_cache, d_logits)
    encoder_tape, _ = backward(model.encoder, enc.cache, d_z + dz_classifier, extra)
    return kd, contrastive, GradientTape(encoder_tape.grads + classifier_tape.grads)


def local_objective(
    model: SplitModel,
    snapshot: Optional[SplitModel],
    global_model: Optional[SplitModel],
    x: np.ndarray,
    y: np.ndarray,
    pseudo: Optional[PseudoBatch],
    tc: LocalTrainConfig,
) -> LocalObjective:
    """Evaluate the combined objective on one minibatch without updating anything."""
    layers = model.layers
    logits, cache = forward(layers, x)
    ce, d_logits = cross_entropy(logits, y)
    tape, _ = backward(layers, cache, d_logits)

    kd = contrastive = 0.0
    if tc.uses_pseudo_batch and pseudo is not None and len(pseudo) > 0 and global_model is not None:
        kd, contrastive, pseudo_tape = _pseudo_sample_terms(model, snapshot, global_model, pseudo.samples, tc)
        tape = tape.add(pseudo_tape)

    loss = ce + total_local_loss(tc.kd_weight * kd, contrastive, tc.contrastive.coefficient)
    return LocalObjective(loss=loss, cross_entropy=ce, kd=kd, contrastive=contrastive, tape=tape)


def local_update(
    client: ClientState,
    train: Dataset,
    global_model: Optional[SplitModel],
    batch: Optional[PseudoBatch],
    tc: LocalTrainConfig,
    round_index: int,
    rng: np.random.Generator,
) -> LocalUpdateResult:
    """
    Refresh the client's snapshot, then run `tc.epochs` epochs on the
    combined objective. The global model and the snapshot are read-only.
    """
    if client.sample_count < 1:
        raise RejectedStateError(f"client {client.client_id} holds no local samples")
    client.refresh_snapshot(round_index)
    x, y = train.subset(client.train_indices)
    layers = client.model.layers
    result = LocalUpdateResult(client_id=client.client_id)
    for _ in range(tc.epochs):
        for idx in minibatches(x.shape[0], tc.batch_size, rng):
            objective = local_objective(client.model, client.snapshot, global_model, x[idx], y[idx], batch, tc)
            sgd_step(layers, clip_tape(objective.tape, tc.grad_clip), client.lr)
            result.losses.append(objective.loss)
    return result


class ClientAgent(BaseAgent):
    """
    Client Agent - trains one client when it is selected.

    The agent owns its ClientState; everything it reads from the server
    (global model, pseudo-batch) arrives through the AgentContext.
    """

    def __init__(self, client: ClientState, train: Dataset, test: Dataset, tc: LocalTrainConfig):
        super().__init__(agent_id=f"client-{client.client_id}", name="ClientAgent")
        self.client = client
        self.train = train
        self.test = test
        self.tc = tc

    def run_update(self, context: AgentContext) -> AgentResult:
        """Synchronous body of perform_step; safe to run on a worker thread."""
        self.state = AgentState.RUNNING
        self.iteration_count += 1
        rng = client_rng(context.config.seed, context.round_index, self.client.client_id)
        try:
            update = local_update(
                self.client,
                self.train,
                context.global_model,
                context.pseudo_batch,
                self.tc,
                context.round_index,
                rng,
            )
            accuracy = evaluate(self.client.model, self.test)
        except RejectedStateError as e:
            self.state = AgentState.FAILED
            self.logger.warning("client_update_diverged", round=context.round_index, error=str(e))
            return AgentResult(
                success=False,
                data={"client_id": self.client.client_id},
                error=str(e),
            )
        self.state = AgentState.COMPLETED
        self.logger.debug(
            "client_update_done",
            round=context.round_index,
            updates=self.iteration_count,
            steps=update.steps,
            train_loss=update.mean_loss,
            accuracy=accuracy,
        )
        return AgentResult(
            success=True,
            data={
                "client_id": self.client.client_id,
                "train_loss": update.mean_loss,
                "steps": update.steps,
                "accuracy": accuracy,
            },
        )

    async def perform_step(self, context: AgentContext) -> AgentResult:
        return self.run_update(context)
