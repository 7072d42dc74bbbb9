"""
Server Agent

RESPONSIBILITY: The server phase of a round.

- client weights from the participation ledger and label divergence
- pseudo-batches from the conditional generator, with missing classes filled
- G generator steps, then D weighted-distillation steps on the global model
- round diagnostics and global-model accuracy

Runs strictly after every participating client has finished its update.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set

import numpy as np

from core.config import ExperimentConfig, Variant
from core.datasets import Dataset
from core.diagnostics import RoundDiagnostics, compute_diagnostics, evaluate
from core.generator import (
    PseudoBatch,
    balanced_labels,
    detect_missing_classes,
    fill_count,
    fill_missing,
    generate,
    train_generator_step,
)
from core.ipwd import (
    ClientWeight,
    client_weights,
    confidence,
    sample_weight,
    server_distill_step,
    uniform_weights,
)
from core.models import SplitModel, predict_logits
from core.numcore import softmax
from core.scheduler import derive_seed
from state.federation_store import ClientStore, ServerState

from .base_agent import AgentContext, AgentResult, AgentState, BaseAgent

ROUND_BATCH_STREAM = 0xB0
FILL_STREAM = 0xF1
GENERATOR_STREAM = 0x6E
DISTILL_BATCH_STREAM = 0xD0
BASELINE_DISTILL_ROUNDS = 2


@dataclass
class PreparedBatch:
    """A pseudo-batch and the classes that had to be filled into it."""
    batch: PseudoBatch
    missing: Set[int] = field(default_factory=set)


@dataclass
class ServerRoundOutcome:
    weights: List[ClientWeight]
    active: bool
    generator_loss: Optional[float] = None
    distill_loss: Optional[float] = None
    missing_classes: List[int] = field(default_factory=list)
    diagnostics: Optional[RoundDiagnostics] = None
    global_accuracy: float = 0.0


class ServerAgent(BaseAgent):
    """
    Server Agent - owns the global model, the generator and the ledger.

    Client models are only ever read here; they act as teachers.
    """

    def __init__(
        self,
        server: ServerState,
        clients: ClientStore,
        train_histogram: np.ndarray,
        test: Dataset,
        cfg: ExperimentConfig,
    ):
        super().__init__(agent_id="server", name="ServerAgent")
        self.server = server
        self.clients = clients
        self.train_histogram = np.asarray(train_histogram, dtype=np.float64)
        self.test = test
        self.cfg = cfg
        self.ipwd = cfg.ipwd_config()

    @property
    def class_count(self) -> int:
        return self.server.generator.class_count

    def server_phase_active(self, round_index: int) -> bool:
        """Baseline runs distill only in its last two rounds; other variants every round."""
        if self.cfg.variant is Variant.BASELINE:
            return round_index > self.cfg.rounds - min(BASELINE_DISTILL_ROUNDS, self.cfg.rounds)
        return True

    def weights_for(self, participants: Sequence[int]) -> List[ClientWeight]:
        if self.cfg.variant is Variant.NO_IPWD:
            return uniform_weights(participants)
        return client_weights(
            self.server.ledger,
            self.clients.histograms(),
            self.ipwd,
            participants,
            self.train_histogram,
        )

    def _teachers(self, participants: Sequence[int]) -> List[SplitModel]:
        return [self.clients[i].model for i in participants]

    def _prepare(
        self,
        stream: int,
        round_index: int,
        participants: Sequence[int],
        weights: Sequence[float],
    ) -> PreparedBatch:
        seed = derive_seed(self.cfg.seed, stream, round_index)
        rng = np.random.default_rng(seed)
        labels = balanced_labels(self.cfg.pseudo_batch, self.class_count, rng)
        batch = generate(self.server.generator, labels, int(rng.integers(2**32)))
        teachers = self._teachers(participants)
        missing = detect_missing_classes(batch, teachers, weights, self.class_count)
        if missing:
            batch = fill_missing(
                self.server.generator,
                batch,
                missing,
                fill_count(self.cfg.pseudo_batch, self.class_count),
                derive_seed(self.cfg.seed, FILL_STREAM, stream, round_index),
            )
        return PreparedBatch(batch=batch, missing=missing)

    def round_batch(
        self, round_index: int, participants: Sequence[int], weights: Sequence[float]
    ) -> PreparedBatch:
        """Pseudo-batch handed to the clients for their KD and contrastive terms."""
        return self._prepare(ROUND_BATCH_STREAM, round_index, participants, weights)

    def distillation_batch(
        self, round_index: int, participants: Sequence[int], weights: Sequence[float]
    ) -> PreparedBatch:
        """Fresh batch after the generator steps, with confidences and sample weights set."""
        prepared = self._prepare(DISTILL_BATCH_STREAM, round_index, participants, weights)
        teacher_probs = [
            softmax(predict_logits(t, prepared.batch.samples)) for t in self._teachers(participants)
        ]
        scores = confidence(teacher_probs, weights)
        if self.cfg.variant is Variant.NO_IPWD:
            gammas = np.ones_like(scores)
        else:
            gammas = np.clip(sample_weight(scores, self.ipwd), np.finfo(np.float64).tiny, 1.0)
        prepared.batch = prepared.batch.with_weights(scores, gammas)
        return prepared

    def train_generator(self, round_index: int, participants: Sequence[int], weights: Sequence[float]) -> float:
        teachers = self._teachers(participants)
        loss = 0.0
        for step in range(self.cfg.generator_steps):
            result = train_generator_step(
                self.server.generator,
                teachers,
                weights,
                self.cfg.pseudo_batch,
                self.cfg.generator_lr,
                derive_seed(self.cfg.seed, GENERATOR_STREAM, round_index, step),
                self.cfg.grad_clip,
            )
            loss = result.loss
        return loss

    def distill(self, batch: PseudoBatch, participants: Sequence[int], weights: Sequence[float]) -> float:
        teachers = self._teachers(participants)
        loss = 0.0
        for _ in range(self.cfg.distill_steps):
            result = server_distill_step(
                self.server.global_model, batch, teachers, weights, self.cfg.lr, self.cfg.grad_clip
            )
            loss = result.loss
        return loss

    def run_server_phase(self, round_index: int, participants: Sequence[int]) -> ServerRoundOutcome:
        weights = self.weights_for(participants)
        normalized = [w.normalized for w in weights]
        outcome = ServerRoundOutcome(weights=weights, active=self.server_phase_active(round_index))
        if outcome.active:
            outcome.generator_loss = self.train_generator(round_index, participants, normalized)
            prepared = self.distillation_batch(round_index, participants, normalized)
            outcome.missing_classes = sorted(prepared.missing)
            outcome.distill_loss = self.distill(prepared.batch, participants, normalized)
            outcome.diagnostics = compute_diagnostics(
                self.server.global_model,
                self.clients.models(),
                self.clients.sizes(),
                participants,
                prepared.batch,
                normalized,
                self.train_histogram,
            )
        outcome.global_accuracy = evaluate(self.server.global_model, self.test)
        return outcome

    async def perform_step(self, context: AgentContext) -> AgentResult:
        self.state = AgentState.RUNNING
        self.iteration_count += 1
        outcome = self.run_server_phase(context.round_index, context.participants)
        self.state = AgentState.COMPLETED
        self.logger.debug(
            "server_phase_done",
            round=context.round_index,
            steps=self.iteration_count,
            active=outcome.active,
            client_results=len(context.previous_results),
            distill_loss=outcome.distill_loss,
            generator_loss=outcome.generator_loss,
        )
        return AgentResult(success=True, data={"outcome": outcome})
