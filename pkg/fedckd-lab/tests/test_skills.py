"""
Tests for artifact skills, the run event log and the round-loop hooks.
"""

import csv

import numpy as np
import pytest

from core.checkpoint import load_model, save_model
from core.config import load_config
from core.datasets import synthetic_mixture
from core.errors import LabError, MetricsWriteError, RejectedInputError, RejectedStateError
from core.numcore import parameters
from core.records import METRICS_COLUMNS, STATUS_DIVERGED, RoundRecord, format_number
from hooks import HookAction, HookContext, PostRoundHook, StopHook
from skills import (
    DumpFeatures,
    MetricsWriter,
    WriteMetrics,
    dump_features,
    manifest_path_for,
    write_metrics,
)
from state import RunEventLog, RunEventType
from tests.helpers import tiny_model


def _record(round_index, **fields):
    base = dict(
        participants=[0, 2],
        client_train_losses=[0.5, 0.25],
        client_accuracies=[0.5, 1.0],
        global_accuracy=0.75,
        distill_loss=0.125,
        client_weights=[0.4, 0.6],
    )
    base.update(fields)
    return RoundRecord(round_index=round_index, **base)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestRecords:
    def test_row_follows_column_order(self):
        row = dict(zip(METRICS_COLUMNS, _record(3).to_row()))
        assert row["round"] == "3"
        assert row["participants"] == "0;2"
        assert row["acc_mean"] == "0.75"
        assert row["acc_std"] == "0.25"
        assert row["client_weights"] == "0.4;0.6"
        assert row["f_ideal"] == ""

    def test_accuracy_outside_unit_interval(self):
        with pytest.raises(RejectedInputError):
            _record(1, client_accuracies=[1.5])

    def test_format_number(self):
        assert format_number(1 / 3) == "0.333333"
        assert format_number(None) == ""


class TestMetrics:
    def test_zero_rounds_writes_header_only(self, tmp_path):
        path = write_metrics([], tmp_path / "metrics.csv")
        assert _rows(path) == [list(METRICS_COLUMNS)]

    def test_one_row_per_round_and_manifest_reloads(self, tmp_path, tiny_config):
        path = write_metrics([_record(1), _record(2)], tmp_path / "metrics.csv", tiny_config)
        rows = _rows(path)
        assert len(rows) == 3
        assert all(len(r) == len(METRICS_COLUMNS) for r in rows)
        manifest = manifest_path_for(path)
        assert manifest.name == "metrics.manifest.yaml"
        assert load_config(manifest) == tiny_config

    def test_rounds_must_increase(self, tmp_path):
        writer = MetricsWriter(tmp_path / "metrics.csv").open()
        writer.append(_record(2))
        with pytest.raises(RejectedStateError):
            writer.append(_record(2))

    async def test_skill_reports_rows(self, tmp_path):
        result = await WriteMetrics().execute({"records": [_record(1)], "path": tmp_path / "m.csv"})
        assert result.success
        assert result.data["rows"] == 1

    async def test_skill_validates_arguments(self):
        result = await WriteMetrics().execute({"records": []})
        assert not result.success
        assert "path" in result.error

    async def test_failure_reraises_underlying_error(self, tmp_path):
        blocked = tmp_path / "m.csv"
        blocked.mkdir()
        result = await WriteMetrics().execute({"records": [_record(1)], "path": blocked})
        assert not result.success
        assert isinstance(result.cause, MetricsWriteError)
        with pytest.raises(MetricsWriteError) as info:
            result.raise_for_failure()
        assert info.value.exit_code == 4

    async def test_raise_for_failure_without_cause(self, tmp_path):
        missing = await WriteMetrics().execute({"records": []})
        with pytest.raises(LabError, match="path"):
            missing.raise_for_failure()
        ok = await WriteMetrics().execute({"records": [], "path": tmp_path / "m.csv"})
        assert ok.raise_for_failure() is ok


class TestFeatures:
    def test_rows_have_tag_label_and_features(self, tmp_path):
        model = tiny_model(input_extent=3, feature_extent=4)
        data = synthetic_mixture(3, 3, 40, seed=0)
        path = dump_features(model, data, 10, tmp_path / "features.csv", tag="client-3", seed=5)
        rows = _rows(path)
        assert len(rows) == 10
        assert all(len(r) == 2 + 4 for r in rows)
        assert {r[0] for r in rows} == {"client-3"}
        assert all(0 <= int(r[1]) < 3 for r in rows)

    def test_same_seed_same_file(self, tmp_path):
        model = tiny_model()
        data = synthetic_mixture(3, 3, 40, seed=0)
        a = dump_features(model, data, 8, tmp_path / "a.csv", seed=1).read_bytes()
        b = dump_features(model, data, 8, tmp_path / "b.csv", seed=1).read_bytes()
        assert a == b

    def test_more_samples_than_rows(self, tmp_path):
        with pytest.raises(RejectedInputError):
            dump_features(tiny_model(), synthetic_mixture(3, 3, 5, seed=0), 6, tmp_path / "f.csv")

    async def test_skill_appends_every_model(self, tmp_path):
        data = synthetic_mixture(3, 3, 40, seed=0)
        models = [("global", tiny_model(seed=0)), ("client-0", tiny_model(seed=1))]
        path = tmp_path / "features.csv"
        result = await DumpFeatures().execute(
            {"models": models, "dataset": data, "sample_count": 5, "path": path}
        )
        assert result.success
        assert [r[0] for r in _rows(path)] == ["global"] * 5 + ["client-0"] * 5


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model(seed=3)
    path = save_model(model, tmp_path / "m.ckpt", tag="global")
    loaded = load_model(path)
    assert loaded.spec == model.spec
    for a, b in zip(parameters(loaded.layers), parameters(model.layers)):
        np.testing.assert_array_equal(a, b)


def test_event_log_is_append_only(tmp_path):
    log = RunEventLog(tmp_path / "events.jsonl", "run-1")
    log.log_run_start({"seed": 0})
    log.log_round(_record(1).to_dict(), wall_seconds=0.5)
    log.log_stop(1, "terminate", "round_budget_exhausted")
    events = log.read_events()
    assert [e["event_type"] for e in events] == ["run_start", "round_complete", "stop_decision"]
    rounds = log.read_events(RunEventType.ROUND_COMPLETE)
    assert rounds[0]["wall_seconds"] == 0.5
    assert rounds[0]["details"]["round"] == 1


class TestHooks:
    @pytest.mark.parametrize(
        "round_index, status, action, reason",
        [
            (1, "ok", HookAction.CONTINUE, "rounds_remaining"),
            (3, "ok", HookAction.TERMINATE, "round_budget_exhausted"),
            (1, STATUS_DIVERGED, HookAction.TERMINATE, "diverged"),
        ],
    )
    async def test_stop_decisions(self, round_index, status, action, reason):
        context = HookContext("run", round_index, 3, record=RoundRecord(round_index, [0], status=status))
        hook = StopHook()
        result = await hook.execute(context)
        assert hook.decisions == [result]
        assert result.action == action
        assert result.reason == reason

    async def test_post_round_persists_row_and_event(self, tmp_path):
        metrics = MetricsWriter(tmp_path / "metrics.csv").open()
        events = RunEventLog(tmp_path / "events.jsonl", "run")
        hook = PostRoundHook(metrics, events)
        result = await hook.execute(HookContext("run", 1, 3, record=_record(1)))
        assert result.action == HookAction.CONTINUE
        assert metrics.rows_written == 1
        assert len(_rows(metrics.path)) == 2
        assert len(events.read_events(RunEventType.ROUND_COMPLETE)) == 1
