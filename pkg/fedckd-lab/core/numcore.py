"""
Numeric Core

Dense differentiable compute for every model in the lab:
- DenseLayer chains with identity / relu / tanh activations
- forward with cached activations, analytic backward into a GradientTape
- softmax, KL divergence, cosine similarity, cross-entropy
- in-place SGD steps

Tensors are plain float64 numpy arrays (batch-major, row-major).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import RejectedInputError, RejectedStateError

TensorValue = np.ndarray

LOG_EPSILON = 1e-12


class Activation(Enum):
    """Supported layer activations."""
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"


@dataclass
class DenseLayer:
    """Affine layer y = act(x W^T + b) with W stored as (out, in)."""
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY
    version: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise RejectedInputError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise RejectedInputError(
                f"bias extent {self.bias.shape[0]} does not match weight rows {self.weights.shape[0]}"
            )
        if isinstance(self.activation, str):
            self.activation = Activation(self.activation)

    @property
    def in_extent(self) -> int:
        return self.weights.shape[1]

    @property
    def out_extent(self) -> int:
        return self.weights.shape[0]

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class ForwardCache:
    """Activations recorded by forward(); consumed by backward()."""
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    outputs: List[np.ndarray]
    layer_ids: Tuple[int, ...]
    versions: Tuple[int, ...]


@dataclass
class GradientTape:
    """Per-parameter gradients aligned with parameters(layers): [W0, b0, W1, b1, ...]."""
    grads: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, layers: Sequence[DenseLayer]) -> "GradientTape":
        return cls([np.zeros_like(p) for p in parameters(layers)])

    def add(self, other: "GradientTape") -> "GradientTape":
        if len(other.grads) != len(self.grads):
            raise RejectedStateError("cannot add tapes of different length")
        return GradientTape([a + b for a, b in zip(self.grads, other.grads)])

    def scale(self, factor: float) -> "GradientTape":
        return GradientTape([g * factor for g in self.grads])

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.grads)))


def parameters(layers: Sequence[DenseLayer]) -> List[np.ndarray]:
    """Flat parameter list [W0, b0, W1, b1, ...]."""
    params: List[np.ndarray] = []
    for layer in layers:
        params.append(layer.weights)
        params.append(layer.bias)
    return params


def parameter_count(layers: Sequence[DenseLayer]) -> int:
    return sum(layer.parameter_count for layer in layers)


def init_layer(
    in_extent: int,
    out_extent: int,
    activation: Activation,
    rng: np.random.Generator,
) -> DenseLayer:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), zero bias."""
    limit = np.sqrt(6.0 / (in_extent + out_extent))
    weights = rng.uniform(-limit, limit, size=(out_extent, in_extent))
    return DenseLayer(weights, np.zeros(out_extent), activation)


def _activate(activation: Activation, pre: np.ndarray) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(pre, 0.0)
    if activation is Activation.TANH:
        return np.tanh(pre)
    return pre


def _activation_grad(activation: Activation, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if activation is Activation.RELU:
        return (pre > 0.0).astype(np.float64)
    if activation is Activation.TANH:
        return 1.0 - out * out
    return np.ones_like(pre)


def forward(layers: Sequence[DenseLayer], x: TensorValue) -> Tuple[np.ndarray, ForwardCache]:
    """
    Run a batch through a layer chain.

    Returns the last layer's output and a cache holding every layer's
    input, pre-activation and output.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise RejectedInputError(f"expected a 2-D batch, got shape {x.shape}")
    if not layers:
        raise RejectedInputError("layer list is empty")
    if x.shape[1] != layers[0].in_extent:
        raise RejectedInputError(
            f"input extent {x.shape[1]} does not match layer in-extent {layers[0].in_extent}"
        )

    inputs, pres, outs = [], [], []
    h = x
    for index, layer in enumerate(layers):
        if h.shape[1] != layer.in_extent:
            raise RejectedInputError(
                f"layer {index} expects extent {layer.in_extent}, got {h.shape[1]}"
            )
        inputs.append(h)
        pre = h @ layer.weights.T + layer.bias
        h = _activate(layer.activation, pre)
        pres.append(pre)
        outs.append(h)

    if not np.all(np.isfinite(h)):
        raise RejectedStateError("forward produced non-finite activations")

    cache = ForwardCache(
        inputs=inputs,
        pre_activations=pres,
        outputs=outs,
        layer_ids=tuple(id(layer) for layer in layers),
        versions=tuple(layer.version for layer in layers),
    )
    return h, cache


def backward(
    layers: Sequence[DenseLayer],
    cache: ForwardCache,
    upstream: TensorValue,
    extra: Optional[Mapping[int, np.ndarray]] = None,
) -> Tuple[GradientTape, np.ndarray]:
    """
    Propagate gradients back through a layer chain.

    `upstream` is dL/d(output of the last layer). `extra` maps a layer index
    to an additional gradient on that layer's output, for losses attached to
    intermediate activations.

    Returns the tape for parameters(layers) and dL/d(input).
    """
    if (
        len(cache.inputs) != len(layers)
        or cache.layer_ids != tuple(id(layer) for layer in layers)
        or cache.versions != tuple(layer.version for layer in layers)
    ):
        raise RejectedStateError("forward cache does not belong to these layers or is stale")

    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.outputs[-1].shape:
        raise RejectedInputError(
            f"upstream gradient shape {upstream.shape} does not match output {cache.outputs[-1].shape}"
        )
    extra = extra or {}

    grads: List[np.ndarray] = [np.empty(0)] * (2 * len(layers))
    g = upstream
    for index in range(len(layers) - 1, -1, -1):
        layer = layers[index]
        if index in extra:
            g = g + extra[index]
        dpre = g * _activation_grad(layer.activation, cache.pre_activations[index], cache.outputs[index])
        grads[2 * index] = dpre.T @ cache.inputs[index]
        grads[2 * index + 1] = dpre.sum(axis=0)
        g = dpre @ layer.weights
    return GradientTape(grads), g


def softmax(logits: TensorValue) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 0:
        raise RejectedInputError("softmax needs a nonempty last extent")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: TensorValue) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with 0*log0 = 0 and q clamped at LOG_EPSILON."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise RejectedInputError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    safe_p = np.where(p > 0.0, p, 1.0)
    terms = np.where(p > 0.0, p * (np.log(safe_p) - np.log(np.maximum(q, LOG_EPSILON))), 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


def kl_divergence(p: TensorValue, q: TensorValue) -> float:
    """KL(p || q) for two probability rows."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or q.ndim != 1:
        raise RejectedInputError("kl_divergence takes 1-D probability rows")
    return float(kl_rows(p, q))


def cosine_rows(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Row-wise cosine similarity and its gradients.

    Returns (cos, dcos/du, dcos/dv). Rows with a zero vector have cosine 0
    and zero gradient.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise RejectedInputError(f"cosine operands differ in shape: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    live = (nu > 0.0) & (nv > 0.0)
    nu_safe = np.where(live, nu, 1.0)
    nv_safe = np.where(live, nv, 1.0)
    dot = np.sum(u * v, axis=-1, keepdims=True)
    cos = np.where(live, dot / (nu_safe * nv_safe), 0.0)
    du = np.where(live, v / (nu_safe * nv_safe) - cos * u / (nu_safe * nu_safe), 0.0)
    dv = np.where(live, u / (nu_safe * nv_safe) - cos * v / (nv_safe * nv_safe), 0.0)
    return np.clip(cos[..., 0], -1.0, 1.0), du, dv


def cosine_similarity(u: TensorValue, v: TensorValue) -> float:
    """Cosine similarity of two vectors; 0 when either is the zero vector."""
    cos, _, _ = cosine_rows(np.atleast_2d(u), np.atleast_2d(v))
    return float(cos[0])


def cross_entropy(logits: TensorValue, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise RejectedInputError(f"logits {logits.shape} and labels {labels.shape} do not align")
    batch = logits.shape[0]
    rows = np.arange(batch)
    log_probs = log_softmax(logits)
    loss = -float(log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / batch


def clip_tape(tape: GradientTape, max_norm: float) -> GradientTape:
    """Scale the tape down to global norm `max_norm`; no-op when max_norm <= 0."""
    if max_norm <= 0.0:
        return tape
    norm = tape.global_norm()
    if norm <= max_norm or norm == 0.0:
        return tape
    return tape.scale(max_norm / norm)


def sgd_step(layers: Sequence[DenseLayer], tape: GradientTape, lr: float) -> Sequence[DenseLayer]:
    """Decrement every parameter by lr times its gradient, in place; all or nothing."""
    params = parameters(layers)
    if len(tape.grads) != len(params):
        raise RejectedStateError(
            f"tape has {len(tape.grads)} entries for {len(params)} parameters"
        )
    for param, grad in zip(params, tape.grads):
        if grad.shape != param.shape:
            raise RejectedStateError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise RejectedStateError("non-finite gradient")
    if lr == 0.0:
        return layers
    updated = [param - lr * grad for param, grad in zip(params, tape.grads)]
    if not all(np.all(np.isfinite(u)) for u in updated):
        raise RejectedStateError("parameters became non-finite")
    for param, new in zip(params, updated):
        param[...] = new
    for layer in layers:
        layer.version += 1
    return layers
