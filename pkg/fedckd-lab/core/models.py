"""
Model Zoo

Heterogeneous MLP families with an explicit encoder / classifier split.

Three families differ in depth and width. Capacity scales every hidden
width; the projection head always emits the experiment's feature extent,
so features are comparable across families.
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import RejectedInputError
from .numcore import (
    Activation,
    DenseLayer,
    ForwardCache,
    forward,
    init_layer,
    parameter_count,
)

MIN_HIDDEN_WIDTH = 4
SPEC_RATIOS = (0.4, 0.3, 0.3)


class ModelFamily(Enum):
    """MLP families standing in for the small / medium / large CNN families."""
    MLP_A = "mlp_a"
    MLP_B = "mlp_b"
    MLP_C = "mlp_c"


FAMILY_HIDDEN: Dict[ModelFamily, Tuple[int, ...]] = {
    ModelFamily.MLP_A: (64,),
    ModelFamily.MLP_B: (48, 32),
    ModelFamily.MLP_C: (40, 40, 24),
}

CAPACITIES: Tuple[Fraction, ...] = (Fraction(1), Fraction(1, 2), Fraction(1, 4))


class HeterogeneityMode(Enum):
    WIDTH_SCALED = "width_scaled"
    HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one client or global model."""
    family: ModelFamily
    capacity: Fraction
    input_extent: int
    feature_extent: int
    class_count: int

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", ModelFamily(self.family))
        object.__setattr__(self, "capacity", Fraction(self.capacity))
        if self.capacity not in CAPACITIES:
            raise RejectedInputError(f"capacity {self.capacity} not in {[str(c) for c in CAPACITIES]}")
        for name in ("input_extent", "feature_extent", "class_count"):
            if getattr(self, name) < 1:
                raise RejectedInputError(f"{name} must be positive")

    @property
    def hidden_widths(self) -> Tuple[int, ...]:
        return tuple(
            max(MIN_HIDDEN_WIDTH, int(width * self.capacity))
            for width in FAMILY_HIDDEN[self.family]
        )

    @property
    def encoder_depth(self) -> int:
        return len(FAMILY_HIDDEN[self.family]) + 1

    def to_dict(self) -> Dict[str, object]:
        return {
            "family": self.family.value,
            "capacity": str(self.capacity),
            "input_extent": self.input_extent,
            "feature_extent": self.feature_extent,
            "class_count": self.class_count,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ModelSpec":
        return cls(
            family=ModelFamily(data["family"]),
            capacity=Fraction(str(data["capacity"])),
            input_extent=int(data["input_extent"]),
            feature_extent=int(data["feature_extent"]),
            class_count=int(data["class_count"]),
        )


@dataclass
class SplitModel:
    """Encoder (feature extractor) plus a one-layer classifier head."""
    encoder: List[DenseLayer]
    classifier: List[DenseLayer]
    spec: ModelSpec
    seed: int = 0

    def __post_init__(self):
        if self.encoder[-1].out_extent != self.spec.feature_extent:
            raise RejectedInputError("encoder output extent must equal ModelSpec.feature_extent")
        if self.classifier[-1].out_extent != self.spec.class_count:
            raise RejectedInputError("classifier output extent must equal ModelSpec.class_count")

    @property
    def layers(self) -> List[DenseLayer]:
        return self.encoder + self.classifier

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.layers)

    def copy(self) -> "SplitModel":
        """Deep copy; the copy shares no arrays with the original."""
        return SplitModel(
            encoder=[layer.copy() for layer in self.encoder],
            classifier=[layer.copy() for layer in self.classifier],
            spec=self.spec,
            seed=self.seed,
        )


@dataclass
class EncodeResult:
    """Encoder output plus every encoder layer's activation (last = features)."""
    features: np.ndarray
    intermediates: List[np.ndarray] = field(default_factory=list)
    cache: ForwardCache = None


def build_model(spec: ModelSpec, seed: int) -> SplitModel:
    """Build a model deterministically from (spec, seed)."""
    rng = np.random.default_rng(seed)
    encoder: List[DenseLayer] = []
    width = spec.input_extent
    for hidden in spec.hidden_widths:
        encoder.append(init_layer(width, hidden, Activation.RELU, rng))
        width = hidden
    encoder.append(init_layer(width, spec.feature_extent, Activation.TANH, rng))
    classifier = [init_layer(spec.feature_extent, spec.class_count, Activation.IDENTITY, rng)]
    return SplitModel(encoder=encoder, classifier=classifier, spec=spec, seed=seed)


def encode(model: SplitModel, x: np.ndarray) -> EncodeResult:
    """Features z plus the per-layer intermediate features of the encoder."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_extent:
        raise RejectedInputError(
            f"input shape {x.shape} does not match input extent {model.spec.input_extent}"
        )
    features, cache = forward(model.encoder, x)
    return EncodeResult(features=features, intermediates=list(cache.outputs), cache=cache)


def classify(model: SplitModel, z: np.ndarray) -> np.ndarray:
    """Pre-softmax logits for a feature batch."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.spec.feature_extent:
        raise RejectedInputError(
            f"feature shape {z.shape} does not match feature extent {model.spec.feature_extent}"
        )
    logits, _ = forward(model.classifier, z)
    return logits


def predict_logits(model: SplitModel, x: np.ndarray) -> np.ndarray:
    """Monolithic forward over the concatenated layer list."""
    logits, _ = forward(model.layers, x)
    return logits


def _largest_remainder(total: int, ratios: Sequence[float]) -> List[int]:
    quotas = [total * r for r in ratios]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def assign_specs(
    client_count: int,
    mode: HeterogeneityMode,
    seed: int,
    input_extent: int,
    feature_extent: int,
    class_count: int,
) -> List[ModelSpec]:
    """
    Per-client specs in 40/30/30 proportions across capacities (width-scaled)
    or families (heterogeneous). Counts use largest-remainder rounding; which
    client receives which ModelSpec is a seeded shuffle.
    """
    if client_count < 1:
        raise RejectedInputError("client count must be at least 1")
    mode = HeterogeneityMode(mode)
    if mode is HeterogeneityMode.WIDTH_SCALED:
        choices = [(ModelFamily.MLP_A, capacity) for capacity in CAPACITIES]
    else:
        choices = [(family, Fraction(1)) for family in ModelFamily]

    counts = _largest_remainder(client_count, SPEC_RATIOS)
    ordered: List[ModelSpec] = []
    for (family, capacity), count in zip(choices, counts):
        ordered.extend(
            [ModelSpec(family, capacity, input_extent, feature_extent, class_count)] * count
        )
    placement = np.random.default_rng(seed).permutation(client_count)
    specs: List[ModelSpec] = [None] * client_count
    for slot, client_id in enumerate(placement):
        specs[int(client_id)] = ordered[slot]
    return specs
