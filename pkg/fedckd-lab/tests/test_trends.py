"""
Desk-scale trend checks. Each runs full experiments and takes minutes,
so the module is deselected by default; run with `pytest -m slow`.
"""

from pathlib import Path

import numpy as np
import pytest

from agents import client_rng, train_local_ce
from core.config import Variant, apply_overrides
from core.datasets import synthetic_mixture
from core.generator import build_generator, train_generator_step
from core.orchestrator import METRICS_FILE, FederatedOrchestrator, directionality_report, run_experiment
from core.presets import DEFAULT_UCIHAR_DIR, participation_sweep, scale_preset, smoke_preset
from tests.helpers import tiny_model

pytestmark = pytest.mark.slow


def test_generator_learns_a_fixed_teacher():
    data = synthetic_mixture(3, 3, 600, seed=0, separation=4.0)
    teacher = tiny_model(input_extent=3, class_count=3, seed=1)
    train_local_ce(teacher, data.features, data.labels, 20, 0.1, 32, client_rng(0, 0, 0))

    g = build_generator(8, 4, 3, 3, seed=2)
    losses = [train_generator_step(g, [teacher], [1.0], 64, 0.01, seed=step).loss for step in range(200)]
    assert np.mean(losses[-10:]) <= 0.8 * losses[0]


async def test_scale_run_metrics_are_byte_identical(tmp_path):
    outputs = []
    for name, workers in (("a", 1), ("b", 1), ("c", 4)):
        cfg = apply_overrides(scale_preset(50, seed=3), {"workers": workers, "output_dir": str(tmp_path / name)})
        await FederatedOrchestrator(cfg).run_experiment()
        outputs.append((tmp_path / name / METRICS_FILE).read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0] == outputs[2]


async def test_smoke_run(tmp_path):
    cfg = apply_overrides(smoke_preset(seed=0), {"output_dir": str(tmp_path / "smoke")})
    result = await FederatedOrchestrator(cfg).run_experiment()
    assert not result.diverged
    assert result.summary.acc_mean >= 0.80
    distill = [r.distill_loss for r in result.records]
    assert distill[-1] <= 0.5 * distill[0]


async def test_full_method_is_not_beaten_by_ablations(tmp_path):
    by_variant = {}
    for variant in (Variant.FULL, Variant.NO_IPWD, Variant.NO_BCL):
        by_variant[variant] = []
        for seed in range(5):
            cfg = apply_overrides(
                smoke_preset(seed),
                {"variant": variant.value, "output_dir": str(tmp_path / variant.value / str(seed))},
            )
            by_variant[variant].append(await run_experiment(cfg, write_artifacts=False))
    full = np.mean([r.summary.acc_mean for r in by_variant[Variant.FULL]])
    for variant in (Variant.NO_IPWD, Variant.NO_BCL):
        ablated = np.mean([r.summary.acc_mean for r in by_variant[variant]])
        assert full >= ablated - 0.01, f"{variant.value} beats the full method on average"
    assert all(count < 2 for count in directionality_report(by_variant).values())


@pytest.mark.skipif(not Path(DEFAULT_UCIHAR_DIR).exists(), reason="UCI-HAR corpus not present")
async def test_accuracy_degrades_gently_with_participation(tmp_path):
    accuracies = []
    for cfg in participation_sweep(seed=0):
        if cfg.participants == 12:
            continue
        cfg = apply_overrides(cfg, {"output_dir": str(tmp_path / f"p{cfg.participants}")})
        result = await run_experiment(cfg, write_artifacts=False)
        accuracies.append(result.summary.acc_mean)
    assert all(later <= earlier + 0.02 for earlier, later in zip(accuracies, accuracies[1:]))
    assert accuracies[0] - accuracies[-1] <= 0.10
