"""
Conditional Generator

Server-side generator mapping [noise || label embedding] to pseudo-samples
for data-free distillation, plus missing-class detection and completion.

Training objective: cross-entropy of the client-weighted teacher ensemble
against the conditioning label, minus a diversity bonus (mean pairwise
sample distance).
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
import structlog

from .checkpoint import read_arrays, write_arrays
from .errors import RejectedInputError
from .ipwd import ensemble_probs
from .models import SplitModel
from .numcore import (
    LOG_EPSILON,
    Activation,
    DenseLayer,
    backward,
    clip_tape,
    forward,
    init_layer,
    parameters,
    sgd_step,
    softmax,
)

logger = structlog.get_logger(__name__)

DIVERSITY_COEFFICIENT = 0.1


@dataclass
class GeneratorNet:
    """Noise extent, label embedding table and dense body."""
    noise_extent: int
    embedding: np.ndarray
    body: List[DenseLayer]
    seed: int = 0

    @property
    def class_count(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_extent(self) -> int:
        return self.embedding.shape[1]

    @property
    def output_extent(self) -> int:
        return self.body[-1].out_extent

    def copy(self) -> "GeneratorNet":
        return GeneratorNet(
            self.noise_extent, self.embedding.copy(), [l.copy() for l in self.body], self.seed
        )


@dataclass
class PseudoBatch:
    """Generated samples with conditioning labels, confidences s_j and weights gamma_j."""
    samples: np.ndarray
    labels: np.ndarray
    confidences: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        size = self.samples.shape[0]
        if self.labels.shape != (size,):
            raise RejectedInputError(f"{size} samples but labels shape {self.labels.shape}")
        for name in ("confidences", "weights"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                if value.shape != (size,):
                    raise RejectedInputError(f"{name} shape {value.shape} does not match {size} samples")
                setattr(self, name, value)
        if self.weights is not None and np.any((self.weights <= 0.0) | (self.weights > 1.0)):
            raise RejectedInputError("sample weights must lie in (0, 1]")

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_weights(self, confidences: np.ndarray, weights: np.ndarray) -> "PseudoBatch":
        return replace(self, confidences=confidences, weights=weights)


@dataclass
class GeneratorStepResult:
    loss: float
    cross_entropy: float
    diversity: float


def build_generator(
    noise_extent: int,
    embed_extent: int,
    output_extent: int,
    class_count: int,
    seed: int,
    hidden: Sequence[int] = (64,),
) -> GeneratorNet:
    rng = np.random.default_rng(seed)
    embedding = rng.standard_normal((class_count, embed_extent))
    body: List[DenseLayer] = []
    width = noise_extent + embed_extent
    for size in hidden:
        body.append(init_layer(width, size, Activation.RELU, rng))
        width = size
    body.append(init_layer(width, output_extent, Activation.IDENTITY, rng))
    return GeneratorNet(noise_extent, embedding, body, seed)


def balanced_labels(count: int, class_count: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin labels in shuffled order; covers every class when count >= class_count."""
    return rng.permutation(np.arange(count) % class_count)


def _generator_input(g: GeneratorNet, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= g.class_count):
        raise RejectedInputError(f"labels must lie in [0, {g.class_count})")
    noise = rng.standard_normal((labels.shape[0], g.noise_extent))
    return np.hstack([noise, g.embedding[labels]])


def generate(g: GeneratorNet, labels: Sequence[int], seed: int) -> PseudoBatch:
    """One sample per label; noise is standard normal drawn from `seed`."""
    labels = np.asarray(labels, dtype=np.int64)
    samples, _ = forward(g.body, _generator_input(g, labels, np.random.default_rng(seed)))
    return PseudoBatch(samples=samples, labels=labels)


def _diversity(x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean pairwise Euclidean distance and its gradient."""
    m = x.shape[0]
    if m < 2:
        return 0.0, np.zeros_like(x)
    diffs = x[:, None, :] - x[None, :, :]
    dist = np.linalg.norm(diffs, axis=2)
    pairs = m * (m - 1) / 2.0
    value = float(np.triu(dist, k=1).sum() / pairs)
    safe = np.where(dist > 0.0, dist, 1.0)
    unit = np.where(dist[:, :, None] > 0.0, diffs / safe[:, :, None], 0.0)
    return value, unit.sum(axis=1) / pairs


def train_generator_step(
    g: GeneratorNet,
    teachers: Sequence[SplitModel],
    weights: Sequence[float],
    batch_size: int,
    lr: float,
    seed: int,
    grad_clip: float = 0.0,
) -> GeneratorStepResult:
    """One SGD step on the generator; teachers are read-only."""
    if not teachers:
        raise RejectedInputError("generator training needs at least one teacher")
    rng = np.random.default_rng(seed)
    labels = balanced_labels(batch_size, g.class_count, rng)
    inputs = _generator_input(g, labels, rng)
    x, cache = forward(g.body, inputs)
    rows = np.arange(batch_size)

    teacher_passes = []
    teacher_probs = []
    for teacher in teachers:
        logits, teacher_cache = forward(teacher.layers, x)
        teacher_passes.append((teacher, teacher_cache))
        teacher_probs.append(softmax(logits))
    ens = ensemble_probs(teacher_probs, weights)

    picked = ens[rows, labels]
    clamped = picked <= LOG_EPSILON
    cross_entropy = -float(np.log(np.maximum(picked, LOG_EPSILON)).mean())
    d_ens = np.zeros_like(ens)
    d_ens[rows, labels] = np.where(clamped, 0.0, -1.0 / (batch_size * np.maximum(picked, LOG_EPSILON)))

    dx = np.zeros_like(x)
    for w, p, (teacher, teacher_cache) in zip(weights, teacher_probs, teacher_passes):
        d_logits = float(w) * p * (d_ens - np.sum(p * d_ens, axis=1, keepdims=True))
        _, dx_teacher = backward(teacher.layers, teacher_cache, d_logits)
        dx += dx_teacher

    diversity, d_div = _diversity(x)
    loss = cross_entropy - DIVERSITY_COEFFICIENT * diversity
    dx -= DIVERSITY_COEFFICIENT * d_div

    tape, d_inputs = backward(g.body, cache, dx)
    d_embedding = np.zeros_like(g.embedding)
    np.add.at(d_embedding, labels, d_inputs[:, g.noise_extent:])
    if lr != 0.0:
        sgd_step(g.body, clip_tape(tape, grad_clip), lr)
        g.embedding -= lr * d_embedding
    return GeneratorStepResult(loss=loss, cross_entropy=cross_entropy, diversity=diversity)


def ensemble_argmax(batch: PseudoBatch, teachers: Sequence[SplitModel], weights: Sequence[float]) -> np.ndarray:
    probs = [softmax(forward(t.layers, batch.samples)[0]) for t in teachers]
    return np.argmax(ensemble_probs(probs, weights), axis=1)


def detect_missing_classes(
    batch: PseudoBatch,
    teachers: Sequence[SplitModel],
    weights: Sequence[float],
    class_count: int,
) -> Set[int]:
    """Classes never chosen as the weighted-ensemble argmax over the batch."""
    if len(batch) == 0:
        raise RejectedInputError("pseudo-batch is empty")
    predicted = {int(c) for c in ensemble_argmax(batch, teachers, weights)}
    return set(range(class_count)) - predicted


def fill_missing(
    g: GeneratorNet,
    batch: PseudoBatch,
    missing: Set[int],
    per_class_count: int,
    seed: int,
) -> PseudoBatch:
    """
    Append `per_class_count` samples conditioned on each missing class.
    Confidences and weights are dropped; they must be recomputed for the
    extended batch.
    """
    if not missing:
        return batch
    if min(missing) < 0 or max(missing) >= g.class_count:
        raise RejectedInputError(f"missing classes must lie in [0, {g.class_count})")
    extra_labels = np.repeat(np.array(sorted(missing), dtype=np.int64), per_class_count)
    extra = generate(g, extra_labels, seed)
    logger.debug("missing_classes_filled", classes=sorted(missing), added=int(extra_labels.size))
    return PseudoBatch(
        samples=np.vstack([batch.samples, extra.samples]),
        labels=np.concatenate([batch.labels, extra.labels]),
    )


def fill_count(batch_size: int, class_count: int) -> int:
    return max(1, batch_size // class_count)


def save_generator(g: GeneratorNet, path: Path) -> Path:
    manifest = {
        "kind": "generator",
        "seed": g.seed,
        "noise_extent": g.noise_extent,
        "embed_extent": g.embed_extent,
        "class_count": g.class_count,
        "output_extent": g.output_extent,
        "hidden": [layer.out_extent for layer in g.body[:-1]],
    }
    return write_arrays(path, [g.embedding] + parameters(g.body), manifest)


def load_generator(path: Path) -> GeneratorNet:
    arrays, manifest = read_arrays(path)
    if manifest.get("kind") != "generator":
        raise RejectedInputError(f"{path} does not hold a generator")
    g = build_generator(
        manifest["noise_extent"],
        manifest["embed_extent"],
        manifest["output_extent"],
        manifest["class_count"],
        manifest["seed"],
        hidden=manifest["hidden"],
    )
    g.embedding[...] = arrays[0]
    for target, array in zip(parameters(g.body), arrays[1:]):
        target[...] = array
    return g
