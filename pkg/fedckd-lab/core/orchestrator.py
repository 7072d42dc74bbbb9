"""
Federated Orchestrator - the round loop.

CANONICAL ROUND LOOP:

while True:
    participants = scheduler.next_round()        # ledger recorded here
    round_batch  = server.round_batch()          # generate + fill missing classes
    client agents run local updates             # concurrent, bounded
    server agent runs generator + distillation  # strictly after all clients
    post_round_hook(record)                      # metrics row + event log
    decision = stop_hook(record)
    if decision == TERMINATE:
        finalize()
        break

ABSOLUTE RULE: Agents NEVER decide termination. ONLY the stop hook decides.
A non-finite loss or parameter anywhere in a round marks the round
`diverged`, and the stop hook ends the run.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import asyncio
import csv
import json
import time

import numpy as np
import structlog

from agents import AgentContext, AgentManager, LocalTrainConfig, ServerAgent
from agents.server_agent import ServerRoundOutcome
from hooks import HookAction, HookContext, PostRoundHook, StopHook
from skills import MetricsWriter, SaveCheckpoints, WriteMetrics
from state import ClientState, ClientStore, RunEventLog, ServerState

from .config import DatasetChoice, ExperimentConfig, Variant, config_from_mapping
from .datasets import Dataset, Split, load_idx, load_ucihar, synthetic_mixture
from .diagnostics import evaluate
from .errors import MetricsWriteError, RejectedStateError
from .generator import build_generator
from .ipwd import ParticipationLedger, participation_frequency
from .models import ModelSpec, assign_specs, build_model
from .partition import PartitionMap, dirichlet_partition, label_histogram
from .records import STATUS_DIVERGED, STATUS_OK, RoundRecord, RunSummary, format_number
from .scheduler import RoundScheduler, derive_seed

logger = structlog.get_logger(__name__)

TRAIN_STREAM = 0x7A
TEST_STREAM = 0x7E
CLIENT_MODEL_STREAM = 0xC0
GLOBAL_MODEL_STREAM = 0x60
GENERATOR_INIT_STREAM = 0x61
PARTITION_STREAM = 0x9A
SPEC_STREAM = 0x5B
MEANS_STREAM = 0x3E

METRICS_FILE = "metrics.csv"
EVENTS_FILE = "events.jsonl"
SUMMARY_FILE = "summary.json"
CHECKPOINT_DIR = "checkpoints"
IDX_FILES = {
    Split.TRAIN: ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    Split.TEST: ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_datasets(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Train and test splits for the configured dataset."""
    if cfg.dataset is DatasetChoice.SYNTHETIC:
        means_seed = derive_seed(cfg.seed, MEANS_STREAM)
        train = synthetic_mixture(
            cfg.class_count, cfg.input_extent, cfg.synthetic_samples,
            derive_seed(cfg.seed, TRAIN_STREAM), cfg.separation, Split.TRAIN, means_seed,
        )
        test = synthetic_mixture(
            cfg.class_count, cfg.input_extent, cfg.synthetic_test_samples,
            derive_seed(cfg.seed, TEST_STREAM), cfg.separation, Split.TEST, means_seed,
        )
        return train, test
    directory = Path(cfg.data_dir)
    if cfg.dataset is DatasetChoice.UCIHAR:
        return load_ucihar(directory)
    splits = []
    for split in (Split.TRAIN, Split.TEST):
        images, labels = IDX_FILES[split]
        splits.append(load_idx(directory / images, directory / labels, split=split))
    return splits[0], splits[1]


@dataclass
class Federation:
    """Everything a run needs, built deterministically from the config."""
    train: Dataset
    test: Dataset
    partition: PartitionMap
    clients: ClientStore
    server: ServerState
    train_histogram: np.ndarray


def build_federation(cfg: ExperimentConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> Federation:
    train, test = datasets or load_datasets(cfg)
    partition = dirichlet_partition(train, cfg.clients, cfg.dirichlet_alpha, derive_seed(cfg.seed, PARTITION_STREAM))
    specs = assign_specs(
        cfg.clients,
        cfg.heterogeneity,
        derive_seed(cfg.seed, SPEC_STREAM),
        train.input_extent,
        cfg.feature_extent,
        train.class_count,
    )
    clients = ClientStore([
        ClientState(
            client_id=client_id,
            model=build_model(spec, derive_seed(cfg.seed, CLIENT_MODEL_STREAM, client_id)),
            train_indices=indices,
            histogram=label_histogram(train, indices),
            lr=cfg.lr,
        )
        for client_id, (spec, indices) in enumerate(zip(specs, partition.client_indices))
    ])
    global_spec = ModelSpec(cfg.global_family, Fraction(1), train.input_extent, cfg.feature_extent, train.class_count)
    server = ServerState(
        global_model=build_model(global_spec, derive_seed(cfg.seed, GLOBAL_MODEL_STREAM)),
        generator=build_generator(
            cfg.noise_extent,
            cfg.embed_extent,
            train.input_extent,
            train.class_count,
            derive_seed(cfg.seed, GENERATOR_INIT_STREAM),
        ),
        ledger=ParticipationLedger(cfg.participants, cfg.rounds),
    )
    train_histogram = label_histogram(train, np.arange(len(train)))
    logger.info(
        "federation_built",
        clients=cfg.clients,
        train=len(train),
        test=len(test),
        shard_min=int(partition.sizes().min()),
        shard_max=int(partition.sizes().max()),
    )
    return Federation(train, test, partition, clients, server, train_histogram)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[RoundRecord] = field(default_factory=list)
    summary: Optional[RunSummary] = None
    output_dir: Optional[Path] = None

    @property
    def diverged(self) -> bool:
        return self.summary is not None and self.summary.status == STATUS_DIVERGED


class FederatedOrchestrator:
    """
    Federated Orchestrator - drives one experiment.

    This orchestrator:
    - Builds the federation from the config
    - Runs client agents, then the server agent, every round
    - Lets the post-round hook persist and the stop hook decide
    - Writes the final summary and checkpoints
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        write_artifacts: bool = True,
        datasets: Optional[Tuple[Dataset, Dataset]] = None,
    ):
        self.cfg = cfg
        self.write_artifacts = write_artifacts
        self.output_dir = Path(cfg.output_dir)
        self.run_id = f"{cfg.dataset.value}-{cfg.variant.value}-n{cfg.clients}-seed{cfg.seed}"

        self.federation = build_federation(cfg, datasets)
        self.scheduler = RoundScheduler(cfg.clients, cfg.participants, cfg.seed, cfg.rounds)
        self.train_config = LocalTrainConfig.from_experiment(cfg)
        self.agent_manager = AgentManager(
            self.federation.clients,
            self.federation.train,
            self.federation.test,
            self.train_config,
            max_concurrent_agents=cfg.workers,
        )
        self.server_agent = ServerAgent(
            self.federation.server,
            self.federation.clients,
            self.federation.train_histogram,
            self.federation.test,
            cfg,
        )

        self.event_log: Optional[RunEventLog] = None
        metrics_path = self.output_dir / METRICS_FILE
        if write_artifacts:
            self.event_log = RunEventLog(self.output_dir / EVENTS_FILE, self.run_id)
        self.metrics = MetricsWriter(metrics_path)
        self.post_round_hook = PostRoundHook(self.metrics, self.event_log) if write_artifacts else None
        self.stop_hook = StopHook()

    @property
    def server(self) -> ServerState:
        return self.federation.server

    @property
    def clients(self) -> ClientStore:
        return self.federation.clients

    async def run_round(self, round_index: int, participants: Sequence[int]) -> RoundRecord:
        """One communication round; the ledger is recorded before anything trains."""
        started = time.perf_counter()
        self.server.begin_round(participants)
        record = RoundRecord(round_index=round_index, participants=list(participants))
        try:
            weights = [w.normalized for w in self.server_agent.weights_for(participants)]
            batch = None
            if self.train_config.uses_pseudo_batch:
                batch = self.server_agent.round_batch(round_index, participants, weights).batch
            context = AgentContext(
                round_index=round_index,
                config=self.cfg,
                participants=tuple(participants),
                global_model=self.server.global_model,
                pseudo_batch=batch,
            )
            client_results = await self.agent_manager.run_clients(participants, context)
            failed = [r for r in client_results if not r.success]
            if failed:
                raise RejectedStateError(failed[0].error or "client update failed")
            record.client_train_losses = [r.data["train_loss"] for r in client_results]
            record.client_accuracies = [r.data["accuracy"] for r in client_results]

            context.previous_results = client_results
            server_result = await self.server_agent.perform_step(context)
            self._fill_server_fields(record, server_result.data["outcome"])
        except RejectedStateError as e:
            logger.warning("round_diverged", round=round_index, error=str(e))
            if self.event_log is not None:
                self.event_log.log_error("round_diverged", str(e), {"round": round_index})
            record = RoundRecord(round_index=round_index, participants=list(participants), status=STATUS_DIVERGED)
        record.wall_seconds = time.perf_counter() - started
        return record

    @staticmethod
    def _fill_server_fields(record: RoundRecord, outcome: ServerRoundOutcome) -> None:
        record.global_accuracy = outcome.global_accuracy
        record.distill_loss = outcome.distill_loss
        record.generator_loss = outcome.generator_loss
        record.missing_classes = list(outcome.missing_classes)
        record.client_weights = [w.normalized for w in outcome.weights]
        if outcome.diagnostics is not None:
            d = outcome.diagnostics
            record.f_ideal = d.f_ideal
            record.f_partial = d.f_partial
            record.delta_f = d.delta_f
            record.pseudo_label_js = d.pseudo_label_js
            record.data_proportions = [d.data_proportions[i] for i in record.participants]

    async def run_experiment(self) -> ExperimentResult:
        """Run rounds until the stop hook terminates, then summarize."""
        started = time.perf_counter()
        result = ExperimentResult(config=self.cfg, output_dir=self.output_dir if self.write_artifacts else None)
        if self.write_artifacts:
            header = await WriteMetrics().execute({"records": [], "path": self.metrics.path, "config": self.cfg})
            header.raise_for_failure()
            self.event_log.log_run_start(self.cfg.to_dict())
        logger.info("run_started", run_id=self.run_id, rounds=self.cfg.rounds, variant=self.cfg.variant.value)

        stop_reason = ""
        while self.scheduler.has_next():
            round_index, participants = self.scheduler.next_round()
            record = await self.run_round(round_index, participants)
            result.records.append(record)

            hook_context = HookContext(
                run_id=self.run_id,
                round_index=round_index,
                total_rounds=self.cfg.rounds,
                record=record,
                elapsed_time_seconds=time.perf_counter() - started,
            )
            if self.post_round_hook is not None:
                await self.post_round_hook.execute(hook_context)
            decision = await self.stop_hook.execute(hook_context)
            if decision.action == HookAction.TERMINATE:
                stop_reason = decision.reason
                if self.event_log is not None:
                    self.event_log.log_stop(round_index, decision.action.value, decision.reason)
                break

        result.summary = self.summarize(result.records, stop_reason)
        if self.write_artifacts:
            await self._finalize(result, time.perf_counter() - started)
        logger.info("run_finished", run_id=self.run_id, **result.summary.to_dict())
        logger.debug("participation_coverage", run_id=self.run_id, **self.clients.get_stats())
        return result

    def summarize(self, records: Sequence[RoundRecord], stop_reason: str) -> RunSummary:
        """Evaluate every client and the global model after the last round."""
        diverged = bool(records) and records[-1].status == STATUS_DIVERGED
        distill_losses = [r.distill_loss for r in records if r.distill_loss is not None]
        summary = RunSummary(
            status=STATUS_DIVERGED if diverged else STATUS_OK,
            rounds_completed=len(records),
            final_distill_loss=distill_losses[-1] if distill_losses else None,
            stop_reason=stop_reason,
        )
        if len(self.server.ledger):
            summary.mean_participation = float(np.mean([
                participation_frequency(self.server.ledger, c.client_id) for c in self.clients
            ]))
        if not diverged:
            summary.client_accuracies = [evaluate(c.model, self.federation.test) for c in self.clients]
            summary.global_accuracy = evaluate(self.server.global_model, self.federation.test)
        return summary

    async def _finalize(self, result: ExperimentResult, wall_seconds: float) -> None:
        summary_path = self.output_dir / SUMMARY_FILE
        try:
            summary_path.write_text(json.dumps(result.summary.to_dict(), indent=2), encoding="utf-8")
        except OSError as e:
            raise MetricsWriteError(f"cannot write summary: {e}", path=str(summary_path)) from e
        self.event_log.log_artifact("summary", str(summary_path))
        if self.cfg.checkpoint and result.summary.status == STATUS_OK:
            saved = await SaveCheckpoints().execute(
                {"server": self.server, "clients": self.clients, "directory": self.output_dir / CHECKPOINT_DIR}
            )
            saved.raise_for_failure()
            self.event_log.log_artifact("checkpoints", str(self.output_dir / CHECKPOINT_DIR))
        self.event_log.log_run_end(result.summary.to_dict(), wall_seconds)


async def run_experiment(cfg: ExperimentConfig, write_artifacts: bool = True) -> ExperimentResult:
    return await FederatedOrchestrator(cfg, write_artifacts=write_artifacts).run_experiment()


def _with(cfg: ExperimentConfig, **changes: Any) -> ExperimentConfig:
    data = cfg.to_dict()
    data.update({k: (v.value if hasattr(v, "value") else v) for k, v in changes.items()})
    return config_from_mapping(data)


SUMMARY_COLUMNS = ("variant", "seed", "status", "rounds_completed", "acc_mean", "acc_std", "global_acc", "final_distill_loss")


def summary_row(variant: str, seed: Any, summary: RunSummary) -> List[str]:
    return [
        variant,
        str(seed),
        summary.status,
        str(summary.rounds_completed),
        format_number(summary.acc_mean),
        format_number(summary.acc_std),
        format_number(summary.global_accuracy),
        format_number(summary.final_distill_loss),
    ]


def write_summary_table(
    rows: Sequence[Sequence[str]], path: Path, columns: Sequence[str] = SUMMARY_COLUMNS
) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(rows)
    except OSError as e:
        raise MetricsWriteError(f"cannot write summary table: {e}", path=str(path)) from e
    return path


def _aggregate_rows(variant: str, results: Sequence[ExperimentResult]) -> List[List[str]]:
    """Per-seed rows plus mean and std rows of the final client accuracy."""
    rows = [summary_row(variant, r.config.seed, r.summary) for r in results]
    finals = [r.summary.acc_mean for r in results if not r.diverged]
    globals_ = [r.summary.global_accuracy for r in results if not r.diverged]
    for label, fn in (("mean", np.mean), ("std", np.std)):
        rows.append([
            variant,
            label,
            f"{len(finals)}/{len(results)} ok",
            "",
            format_number(fn(finals)) if finals else "",
            "",
            format_number(fn(globals_)) if globals_ else "",
            "",
        ])
    return rows


async def run_repeats(cfg: ExperimentConfig, seeds: Sequence[int], table_name: str = "repeats.csv") -> List[ExperimentResult]:
    """Run the same experiment under several master seeds."""
    root = Path(cfg.output_dir)
    results = []
    for seed in seeds:
        seeded = _with(cfg, seed=seed, output_dir=str(root / f"seed-{seed}"))
        results.append(await run_experiment(seeded))
    write_summary_table(_aggregate_rows(cfg.variant.value, results), root / table_name)
    return results


def directionality_report(by_variant: Dict[Variant, List[ExperimentResult]], tolerance: float = 0.01) -> Dict[str, int]:
    """Per ablation, the number of seeds where the full method trails it by more than `tolerance`."""
    full = {r.config.seed: r.summary.acc_mean for r in by_variant.get(Variant.FULL, [])}
    report = {}
    for variant, results in by_variant.items():
        if variant is Variant.FULL:
            continue
        report[variant.value] = sum(
            1 for r in results
            if r.config.seed in full and full[r.config.seed] < r.summary.acc_mean - tolerance
        )
    return report


async def run_ablation(cfg: ExperimentConfig, seeds: Sequence[int]) -> Dict[str, Any]:
    """full / no_ipwd / no_bcl / baseline over the same seeds; writes ablation.csv."""
    root = Path(cfg.output_dir)
    by_variant: Dict[Variant, List[ExperimentResult]] = {}
    rows: List[List[str]] = []
    for variant in Variant:
        variant_cfg = _with(cfg, variant=variant, output_dir=str(root / variant.value))
        results = []
        for seed in seeds:
            seeded = _with(variant_cfg, seed=seed, output_dir=str(root / variant.value / f"seed-{seed}"))
            results.append(await run_experiment(seeded))
        by_variant[variant] = results
        rows.extend(_aggregate_rows(variant.value, results))
    table = write_summary_table(rows, root / "ablation.csv")
    reversed_seeds = directionality_report(by_variant)
    for variant, count in reversed_seeds.items():
        if count:
            logger.warning("ablation_reversed", variant=variant, seeds=count, of=len(seeds))
    return {"table": str(table), "reversed_seeds": reversed_seeds, "results": by_variant}


def run_experiment_sync(cfg: ExperimentConfig, write_artifacts: bool = True) -> ExperimentResult:
    return asyncio.run(run_experiment(cfg, write_artifacts))
