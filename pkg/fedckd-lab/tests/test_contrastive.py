"""
Tests for the bidirectional contrastive losses.
"""

import math

import numpy as np
import pytest

from core.contrastive import (
    ContrastiveConfig,
    decode_contrastive_loss,
    encode_contrastive_loss,
    info_nce,
    multilayer_combine,
    total_local_loss,
)
from core.errors import ConfigurationError
from tests.helpers import numeric_gradient, relative_error


def _operands(seed=0, m=4, d=5, k=2):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, d)), rng.standard_normal((m, d)), [rng.standard_normal((m, d)) for _ in range(k)]


def _oracle(anchor, positive, negatives, tau):
    total = 0.0
    for j in range(anchor.shape[0]):
        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        num = math.exp(cos(anchor[j], positive[j]) / tau)
        den = num + sum(math.exp(cos(anchor[j], n[j]) / tau) for n in negatives)
        total += -math.log(num / den)
    return total / anchor.shape[0]


def test_matches_direct_computation():
    anchor, positive, negatives = _operands()
    assert info_nce(anchor, positive, negatives, 0.5).loss == pytest.approx(_oracle(anchor, positive, negatives, 0.5))


DIRECTIONS = [
    ("encode", lambda a, p, ns, tau: encode_contrastive_loss(a, p, ns, tau).loss),
    ("decode", lambda a, p, ns, tau: decode_contrastive_loss(a, p, ns, tau).loss),
]


def _random_instance(rng, min_negatives=0):
    m, d = int(rng.integers(1, 9)), int(rng.integers(2, 7))
    k = int(rng.integers(min_negatives, 5))
    anchor = rng.standard_normal((m, d))
    positive = rng.standard_normal((m, d))
    negatives = [rng.standard_normal((m, d)) for _ in range(k)]
    return anchor, positive, negatives, float(rng.uniform(0.05, 2.0))


@pytest.mark.parametrize("name, loss", DIRECTIONS)
def test_matches_direct_computation_on_random_instances(name, loss):
    rng = np.random.default_rng(100 if name == "encode" else 101)
    for _ in range(100):
        anchor, positive, negatives, tau = _random_instance(rng)
        assert loss(anchor, positive, negatives, tau) == pytest.approx(
            _oracle(anchor, positive, negatives, tau), rel=1e-10, abs=1e-10
        )


@pytest.mark.parametrize("name, loss", DIRECTIONS)
def test_invariant_to_rescaling_operands(name, loss):
    rng = np.random.default_rng(200 if name == "encode" else 201)

    def rescale(x):
        return x * rng.uniform(0.01, 100.0, size=(x.shape[0], 1))

    for _ in range(1000):
        anchor, positive, negatives, tau = _random_instance(rng)
        base = loss(anchor, positive, negatives, tau)
        scaled = loss(rescale(anchor), rescale(positive), [rescale(n) for n in negatives], tau)
        assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("name, loss", DIRECTIONS)
def test_high_temperature_tends_to_log_one_plus_k(name, loss):
    rng = np.random.default_rng(300 if name == "encode" else 301)
    for _ in range(1000):
        anchor, positive, negatives, _ = _random_instance(rng)
        assert loss(anchor, positive, negatives, 1e8) == pytest.approx(math.log(1 + len(negatives)), abs=1e-6)


@pytest.mark.parametrize("name, loss", DIRECTIONS)
def test_monotone_in_positive_and_negative_similarity(name, loss):
    rng = np.random.default_rng(400 if name == "encode" else 401)
    for _ in range(1000):
        anchor, positive, negatives, tau = _random_instance(rng, min_negatives=1)
        # adding a positive multiple of the anchor raises each row's cosine to it
        pull = rng.uniform(0.1, 3.0) * anchor
        base = loss(anchor, positive, negatives, tau)
        assert loss(anchor, positive + pull, negatives, tau) <= base + 1e-12
        closer_negative = [negatives[0] + pull] + negatives[1:]
        assert loss(anchor, positive, closer_negative, tau) >= base - 1e-12


def test_identical_positive_beats_opposite_positive():
    anchor, _, negatives = _operands(3)
    assert info_nce(anchor, -anchor, negatives, 0.5).loss > info_nce(anchor, anchor, negatives, 0.5).loss



def test_no_negatives_means_zero_loss():
    anchor, positive, _ = _operands(4)
    result = info_nce(anchor, positive, [], 0.5)
    assert result.loss == pytest.approx(0.0)
    assert not np.any(result.grad_anchor)
    assert result.grad_negatives == []


def test_gradients_match_finite_differences():
    anchor, positive, negatives = _operands(5)
    result = info_nce(anchor, positive, negatives, 0.7)
    numeric = numeric_gradient(
        lambda: info_nce(anchor, positive, negatives, 0.7).loss, [anchor, positive] + negatives
    )
    analytic = [result.grad_anchor, result.grad_positive] + result.grad_negatives
    assert relative_error(analytic, numeric) < 1e-6


def test_directions_swap_roles():
    local, global_, history = _operands(6, k=1)
    enc = encode_contrastive_loss(local, global_, history, 0.5).loss
    dec = decode_contrastive_loss(local, history[0], [global_], 0.5).loss
    assert enc == pytest.approx(_oracle(local, global_, history, 0.5))
    assert dec == pytest.approx(_oracle(local, history[0], [global_], 0.5))


def test_multilayer_combine_uses_level_weights():
    cfg = ContrastiveConfig(lambda_decode=0.5, layer_weights=(0.25, 0.75), depth=2)
    combined = multilayer_combine([1.0, 2.0], [4.0, 0.0], cfg)
    assert combined == pytest.approx(0.25 * (1.0 + 2.0) + 0.75 * 2.0)


def test_default_level_weights_are_uniform():
    assert ContrastiveConfig(depth=4).weights() == (0.25, 0.25, 0.25, 0.25)


def test_total_local_loss():
    assert total_local_loss(0.4, 2.0, 0.5) == pytest.approx(1.4)


def test_layer_weight_count_must_match_depth():
    with pytest.raises(ConfigurationError) as info:
        ContrastiveConfig(layer_weights=(1.0,), depth=2)
    assert "layer_weights" in info.value.keys


def test_temperature_must_be_positive():
    with pytest.raises(ConfigurationError):
        ContrastiveConfig(temperature=0.0)
