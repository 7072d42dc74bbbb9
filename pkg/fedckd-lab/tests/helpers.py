"""
Shared test helpers: finite differences and tiny fixtures.
"""

from fractions import Fraction
from typing import Callable, List

import numpy as np

from core.models import ModelFamily, ModelSpec, SplitModel, build_model


def numeric_gradient(loss: Callable[[], float], params: List[np.ndarray], eps: float = 1e-6) -> List[np.ndarray]:
    """Central differences of `loss` with respect to every entry of `params` (perturbed in place)."""
    grads = []
    for param in params:
        grad = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            index = it.multi_index
            original = param[index]
            param[index] = original + eps
            plus = loss()
            param[index] = original - eps
            minus = loss()
            param[index] = original
            grad[index] = (plus - minus) / (2 * eps)
        grads.append(grad)
    return grads


def relative_error(a: List[np.ndarray], b: List[np.ndarray]) -> float:
    flat_a = np.concatenate([x.ravel() for x in a])
    flat_b = np.concatenate([x.ravel() for x in b])
    scale = max(np.linalg.norm(flat_a), np.linalg.norm(flat_b), 1e-12)
    return float(np.linalg.norm(flat_a - flat_b) / scale)


def tiny_model(
    family: ModelFamily = ModelFamily.MLP_A,
    capacity: Fraction = Fraction(1, 4),
    input_extent: int = 3,
    feature_extent: int = 4,
    class_count: int = 3,
    seed: int = 0,
) -> SplitModel:
    return build_model(ModelSpec(family, capacity, input_extent, feature_extent, class_count), seed)


def perturbed_copy(model: SplitModel, scale: float, seed: int) -> SplitModel:
    rng = np.random.default_rng(seed)
    other = model.copy()
    for layer in other.layers:
        layer.weights += scale * rng.standard_normal(layer.weights.shape)
    return other
