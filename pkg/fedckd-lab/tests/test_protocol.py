"""
Tests for the federated round protocol: sampling, local updates,
server phase, diagnostics and run determinism.
"""

import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from agents import LocalTrainConfig, client_rng, local_objective, local_update, train_local_ce
from core.config import Variant, apply_overrides
from core.contrastive import ContrastiveConfig
from core.datasets import synthetic_mixture
from core.diagnostics import compute_diagnostics, data_proportions, evaluate
from core.errors import ConfigurationError, MetricsWriteError, RejectedInputError, RejectedStateError
from core.generator import PseudoBatch
from core.ipwd import ParticipationLedger, distillation_gap, participation_frequency
from core.models import ModelFamily, encode, predict_logits
from core.numcore import parameters
from core.orchestrator import FederatedOrchestrator, METRICS_FILE
from core.partition import label_histogram
from core.scheduler import RoundScheduler, derive_seed, sample_clients
from state import ClientState
from tests.helpers import numeric_gradient, perturbed_copy, relative_error, tiny_model


def _client(model, dataset, indices, lr=0.1):
    indices = np.asarray(indices)
    return ClientState(0, model, indices, label_histogram(dataset, indices), lr)


def _params(model):
    return [p.copy() for p in parameters(model.layers)]


def _softmax_row(logits):
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


class TestSampling:
    def test_distinct_sorted_and_seeded(self):
        chosen = sample_clients(50, 10, seed=3, round_index=7)
        assert len(set(chosen)) == 10
        assert list(chosen) == sorted(chosen)
        assert chosen == sample_clients(50, 10, seed=3, round_index=7)
        assert chosen != sample_clients(50, 10, seed=3, round_index=8)

    def test_full_participation(self):
        assert sample_clients(5, 5, seed=0, round_index=1) == (0, 1, 2, 3, 4)

    def test_too_many_participants(self):
        with pytest.raises(ConfigurationError):
            sample_clients(3, 4, seed=0, round_index=1)

    def test_scheduler_runs_exact_round_budget(self):
        scheduler = RoundScheduler(10, 2, seed=1, total_rounds=3)
        rounds = []
        while scheduler.has_next():
            rounds.append(scheduler.next_round()[0])
        assert rounds == [1, 2, 3]
        assert len(scheduler.history) == 3

    def test_mean_participation_matches_rate(self):
        ledger = ParticipationLedger(10, 100)
        scheduler = RoundScheduler(50, 10, seed=0, total_rounds=100)
        while scheduler.has_next():
            ledger.record(scheduler.next_round()[1])
        frequencies = [participation_frequency(ledger, i) for i in range(50)]
        assert np.mean(frequencies) == pytest.approx(0.2)
        assert max(frequencies) < 0.5, "uniform sampling should not favor any client heavily"

    def test_derive_seed_separates_streams(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)


class TestLocalUpdate:
    def setup_method(self):
        self.data = synthetic_mixture(3, 3, 60, seed=0)

    def test_without_pseudo_terms_equals_plain_training(self):
        model = tiny_model(seed=4)
        reference = model.copy()
        tc = LocalTrainConfig(epochs=2, batch_size=8, kd_weight=0.0, contrastive=ContrastiveConfig(coefficient=0.0))
        client = _client(model, self.data, np.arange(40))

        result = local_update(client, self.data, None, None, tc, round_index=1, rng=client_rng(0, 1, 0))
        x, y = self.data.subset(np.arange(40))
        losses = train_local_ce(reference, x, y, 2, 0.1, 8, client_rng(0, 1, 0))

        assert result.losses == losses
        for a, b in zip(parameters(model.layers), parameters(reference.layers)):
            np.testing.assert_array_equal(a, b)

    def test_zero_epochs_leaves_model_unchanged(self):
        model = tiny_model(seed=4)
        before = _params(model)
        client = _client(model, self.data, np.arange(20))
        result = local_update(client, self.data, None, None, LocalTrainConfig(epochs=0), 1, client_rng(0, 1, 0))
        assert result.steps == 0
        for old, new in zip(before, parameters(model.layers)):
            np.testing.assert_array_equal(old, new)
        for old, snap in zip(before, parameters(client.snapshot.layers)):
            np.testing.assert_array_equal(old, snap)

    def test_snapshot_is_pre_update_copy(self):
        model = tiny_model(seed=4)
        before = _params(model)
        client = _client(model, self.data, np.arange(30))
        local_update(client, self.data, None, None, LocalTrainConfig(epochs=1, batch_size=10), 1, client_rng(0, 1, 0))
        for old, snap, live in zip(before, parameters(client.snapshot.layers), parameters(model.layers)):
            np.testing.assert_array_equal(old, snap)
            assert snap is not live
        assert client.rounds_participated == 1

    def test_snapshot_refreshes_once_per_round(self):
        client = _client(tiny_model(), self.data, np.arange(10))
        client.refresh_snapshot(3)
        with pytest.raises(RejectedStateError):
            client.refresh_snapshot(3)
        client.refresh_snapshot(4)

    def test_global_model_is_read_only(self):
        model = tiny_model(seed=1)
        global_model = perturbed_copy(model, 0.3, 9)
        before = _params(global_model)
        pseudo = PseudoBatch(np.random.default_rng(0).standard_normal((6, 3)), np.zeros(6))
        client = _client(model, self.data, np.arange(30))
        local_update(client, self.data, global_model, pseudo, LocalTrainConfig(batch_size=10), 1, client_rng(0, 1, 0))
        for old, new in zip(before, parameters(global_model.layers)):
            np.testing.assert_array_equal(old, new)


def test_full_local_objective_gradient_matches_finite_differences():
    model = tiny_model(ModelFamily.MLP_B, Fraction(1, 4), seed=2)
    snapshot = perturbed_copy(model, 0.3, 1)
    global_model = perturbed_copy(model, 0.5, 2)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 3))
    y = np.array([0, 1, 2, 1, 0])
    pseudo = PseudoBatch(rng.standard_normal((6, 3)), np.zeros(6))
    tc = LocalTrainConfig(
        kd_weight=0.7,
        contrastive=ContrastiveConfig(
            temperature=0.5,
            lambda_decode=0.8,
            layer_weights=(0.2, 0.3, 0.5),
            coefficient=0.5,
            negative_count=1,
            depth=3,
        ),
    )

    objective = local_objective(model, snapshot, global_model, x, y, pseudo, tc)
    assert objective.kd > 0.0 and objective.contrastive > 0.0
    assert objective.loss == pytest.approx(
        objective.cross_entropy + 0.7 * objective.kd + 0.5 * objective.contrastive, rel=1e-12
    )
    numeric = numeric_gradient(
        lambda: local_objective(model, snapshot, global_model, x, y, pseudo, tc).loss,
        parameters(model.layers),
    )
    assert relative_error(objective.tape.grads, numeric) < 1e-5


def test_zero_history_depth_drops_contrastive_terms():
    model = tiny_model(seed=2)
    pseudo = PseudoBatch(np.random.default_rng(0).standard_normal((4, 3)), np.zeros(4))
    tc = LocalTrainConfig(kd_weight=0.0, contrastive=ContrastiveConfig(negative_count=0))
    objective = local_objective(
        model, perturbed_copy(model, 0.2, 1), perturbed_copy(model, 0.2, 2), np.zeros((2, 3)), np.array([0, 1]), pseudo, tc
    )
    assert objective.contrastive == pytest.approx(0.0)
    assert objective.loss == pytest.approx(objective.cross_entropy)


class TestDiagnostics:
    def _batch(self):
        return PseudoBatch(np.random.default_rng(1).standard_normal((8, 3)), np.zeros(8))

    def test_objectives_match_direct_computation(self):
        global_model = tiny_model(seed=0)
        clients = [tiny_model(seed=s) for s in (1, 2, 3)]
        sizes = [10, 30, 60]
        batch = self._batch()
        diag = compute_diagnostics(global_model, clients, sizes, [0, 2], batch, [0.5, 0.5], np.full(3, 1 / 3))

        gaps = [distillation_gap(global_model, m, batch.samples) for m in clients]
        assert diag.f_ideal == pytest.approx(np.mean(gaps))
        assert diag.f_partial == pytest.approx((0.1 * gaps[0] + 0.6 * gaps[2]) / 0.7)
        assert diag.delta_f == pytest.approx(diag.f_ideal - diag.f_partial)
        assert diag.data_proportions == pytest.approx([0.1, 0.3, 0.6])
        assert 0.0 <= diag.pseudo_label_js <= np.log(2.0)

    def test_objectives_match_brute_force_on_random_instances(self):
        rng = np.random.default_rng(40)
        for trial in range(100):
            clients_total = int(rng.integers(2, 7))
            classes = int(rng.integers(2, 6))
            m = int(rng.integers(1, 9))
            global_model = tiny_model(class_count=classes, seed=1000 + trial)
            clients = [tiny_model(class_count=classes, seed=trial * 10 + c) for c in range(clients_total)]
            sizes = [int(s) for s in rng.integers(1, 100, size=clients_total)]
            participants = sorted(int(i) for i in rng.choice(clients_total, size=int(rng.integers(1, clients_total + 1)), replace=False))
            teacher_weights = [float(w) for w in rng.dirichlet(np.ones(len(participants)))]
            train_hist = rng.dirichlet(np.ones(classes))
            batch = PseudoBatch(rng.standard_normal((m, 3)), rng.integers(0, classes, size=m))

            diag = compute_diagnostics(global_model, clients, sizes, participants, batch, teacher_weights, train_hist)

            student = [_softmax_row(r) for r in predict_logits(global_model, batch.samples)]
            teachers = [[_softmax_row(r) for r in predict_logits(c, batch.samples)] for c in clients]
            gaps = []
            for rows in teachers:
                total = 0.0
                for p_row, q_row in zip(student, rows):
                    total += sum(p * math.log(p / q) for p, q in zip(p_row, q_row) if p > 0)
                gaps.append(total / m)
            f_ideal = sum(gaps) / clients_total
            share = sum(sizes[i] for i in participants)
            f_partial = sum(sizes[i] * gaps[i] for i in participants) / share

            counts = [0] * classes
            for j in range(m):
                mixed = [sum(w * teachers[i][j][c] for w, i in zip(teacher_weights, participants)) for c in range(classes)]
                counts[mixed.index(max(mixed))] += 1
            pseudo_hist = [c / m for c in counts]
            js = 0.0
            for a, b in zip(pseudo_hist, train_hist):
                mid = 0.5 * (a + b)
                js += (0.5 * a * math.log(a / mid) if a > 0 else 0.0) + (0.5 * b * math.log(b / mid) if b > 0 else 0.0)

            assert diag.data_proportions == pytest.approx([s / sum(sizes) for s in sizes], abs=1e-12)
            assert diag.f_ideal == pytest.approx(f_ideal, rel=1e-10, abs=1e-10)
            assert diag.f_partial == pytest.approx(f_partial, rel=1e-10, abs=1e-10)
            assert diag.delta_f == pytest.approx(f_ideal - f_partial, abs=1e-10)
            assert diag.pseudo_label_js == pytest.approx(js, abs=1e-10)

    def test_identical_clients_have_no_gap(self):
        shared = tiny_model(seed=1)
        clients = [shared.copy() for _ in range(4)]
        diag = compute_diagnostics(tiny_model(seed=0), clients, [5, 5, 5, 5], [1, 3], self._batch(), [0.5, 0.5], np.full(3, 1 / 3))
        assert diag.delta_f == pytest.approx(0.0, abs=1e-12)

    def test_data_proportions_reject_empty(self):
        np.testing.assert_allclose(data_proportions([1, 3]), [0.25, 0.75])
        with pytest.raises(RejectedInputError):
            data_proportions([])

    def test_evaluate(self):
        model = tiny_model(input_extent=2, class_count=2)
        head = model.classifier[-1]
        head.weights[...] = 0.0
        head.bias[...] = [1.0, 0.0]
        data = synthetic_mixture(2, 2, 10, seed=0)
        assert evaluate(model, data) == pytest.approx(0.5)


class TestOrchestrator:
    async def test_ledger_grows_by_one_per_round(self, tiny_config):
        orchestrator = FederatedOrchestrator(tiny_config, write_artifacts=False)
        for round_index in (1, 2):
            _, participants = orchestrator.scheduler.next_round()
            record = await orchestrator.run_round(round_index, participants)
            assert len(orchestrator.server.ledger) == round_index
            assert orchestrator.server.round_counter == round_index
            assert record.status == "ok"
            assert len(record.client_weights) == tiny_config.participants
            assert sum(record.client_weights) == pytest.approx(1.0)

    async def test_no_ipwd_uses_uniform_weights(self, tiny_config):
        cfg = apply_overrides(tiny_config, {"variant": "no_ipwd"})
        orchestrator = FederatedOrchestrator(cfg, write_artifacts=False)
        record = await orchestrator.run_round(1, (0, 2, 4))
        assert record.client_weights == pytest.approx([1 / 3] * 3)

    async def test_baseline_distills_only_in_final_rounds(self, tiny_config):
        cfg = apply_overrides(tiny_config, {"variant": Variant.BASELINE.value, "rounds": 4})
        result = await FederatedOrchestrator(cfg, write_artifacts=False).run_experiment()
        distilled = [r.round_index for r in result.records if r.distill_loss is not None]
        assert distilled == [3, 4]
        assert all(r.global_accuracy is not None for r in result.records)

    async def test_full_participation_gives_unit_frequency(self, tiny_config):
        cfg = apply_overrides(tiny_config, {"clients": 4, "participants": 4, "rounds": 2})
        result = await FederatedOrchestrator(cfg, write_artifacts=False).run_experiment()
        assert result.summary.mean_participation == pytest.approx(1.0)
        assert result.summary.rounds_completed == 2
        assert result.summary.stop_reason == "round_budget_exhausted"

    async def test_metrics_identical_across_worker_counts(self, tiny_config, tmp_path):
        outputs = []
        for workers in (1, 4):
            cfg = apply_overrides(tiny_config, {"workers": workers, "output_dir": str(tmp_path / f"w{workers}")})
            await FederatedOrchestrator(cfg).run_experiment()
            outputs.append((tmp_path / f"w{workers}" / METRICS_FILE).read_bytes())
        assert outputs[0] == outputs[1]

    async def test_same_seed_same_models(self, tiny_config):
        runs = []
        for _ in range(2):
            orchestrator = FederatedOrchestrator(tiny_config, write_artifacts=False)
            await orchestrator.run_experiment()
            runs.append(orchestrator)
        for a, b in zip(parameters(runs[0].server.global_model.layers), parameters(runs[1].server.global_model.layers)):
            np.testing.assert_array_equal(a, b)

    async def test_client_features_keep_shared_extent(self, tiny_config):
        orchestrator = FederatedOrchestrator(tiny_config, write_artifacts=False)
        x = orchestrator.federation.test.features[:3]
        extents = {encode(c.model, x).features.shape[1] for c in orchestrator.clients}
        assert extents == {tiny_config.feature_extent}

    async def test_unwritable_metrics_path_raises_write_error(self, tiny_config):
        (Path(tiny_config.output_dir) / METRICS_FILE).mkdir(parents=True)
        with pytest.raises(MetricsWriteError):
            await FederatedOrchestrator(tiny_config).run_experiment()

    async def test_checkpoints_written_through_skill(self, tiny_config):
        cfg = apply_overrides(tiny_config, {"rounds": 1, "checkpoint": True})
        await FederatedOrchestrator(cfg).run_experiment()
        saved = sorted(p.name for p in (Path(cfg.output_dir) / "checkpoints").glob("*.ckpt"))
        assert saved == [f"client-{i:04d}.ckpt" for i in range(6)] + ["generator.ckpt", "global.ckpt"]
