"""
Tests for the model zoo.
"""

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from core.errors import RejectedInputError
from core.models import (
    HeterogeneityMode,
    ModelFamily,
    ModelSpec,
    assign_specs,
    build_model,
    classify,
    encode,
    predict_logits,
)
from tests.helpers import tiny_model


def test_capacity_scales_hidden_widths():
    full = ModelSpec(ModelFamily.MLP_B, Fraction(1), 10, 8, 3)
    quarter = ModelSpec(ModelFamily.MLP_B, Fraction(1, 4), 10, 8, 3)
    assert full.hidden_widths == (48, 32)
    assert quarter.hidden_widths == (12, 8)
    assert ModelSpec(ModelFamily.MLP_C, Fraction(1, 4), 10, 8, 3).hidden_widths == (10, 10, 6)


def test_unknown_capacity_is_rejected():
    with pytest.raises(RejectedInputError):
        ModelSpec(ModelFamily.MLP_A, Fraction(1, 3), 10, 8, 3)


def test_build_is_deterministic_per_seed():
    a = tiny_model(seed=11)
    b = tiny_model(seed=11)
    c = tiny_model(seed=12)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weights, lb.weights)
    assert not np.array_equal(a.layers[0].weights, c.layers[0].weights)


def test_encode_then_classify_equals_monolithic_forward():
    model = tiny_model(ModelFamily.MLP_C, Fraction(1, 2))
    x = np.random.default_rng(0).standard_normal((7, 3))
    result = encode(model, x)
    assert result.features.shape == (7, 4)
    assert len(result.intermediates) == model.spec.encoder_depth
    np.testing.assert_allclose(classify(model, result.features), predict_logits(model, x))


def test_copy_shares_no_arrays():
    model = tiny_model()
    clone = model.copy()
    clone.layers[0].weights += 1.0
    clone.layers[-1].bias[:] = 5.0
    assert not np.array_equal(model.layers[0].weights, clone.layers[0].weights)
    assert not np.any(model.layers[-1].bias == 5.0)


def test_input_extent_mismatch_is_rejected():
    with pytest.raises(RejectedInputError):
        encode(tiny_model(), np.ones((2, 5)))


@pytest.mark.parametrize("mode", list(HeterogeneityMode))
def test_assign_specs_proportions(mode):
    specs = assign_specs(20, mode, seed=3, input_extent=6, feature_extent=4, class_count=3)
    assert len(specs) == 20
    key = (lambda s: s.capacity) if mode is HeterogeneityMode.WIDTH_SCALED else (lambda s: s.family)
    counts = sorted(Counter(key(s) for s in specs).values())
    assert counts == [6, 6, 8]


def test_assign_specs_placement_depends_on_seed():
    a = assign_specs(20, HeterogeneityMode.WIDTH_SCALED, 0, 6, 4, 3)
    b = assign_specs(20, HeterogeneityMode.WIDTH_SCALED, 0, 6, 4, 3)
    c = assign_specs(20, HeterogeneityMode.WIDTH_SCALED, 1, 6, 4, 3)
    assert a == b
    assert a != c


def test_feature_extent_is_shared_across_families():
    for family in ModelFamily:
        model = build_model(ModelSpec(family, Fraction(1), 6, 5, 3), seed=0)
        assert encode(model, np.zeros((1, 6))).features.shape == (1, 5)
