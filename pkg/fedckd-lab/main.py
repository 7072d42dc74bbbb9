"""
FedCKD Lab - Main Entry Point

Verbs:
  run CONFIG                 run one experiment from a flat YAML config
  preset NAME                run a named preset (S@10 ... S@500, jr-sweep, smoke)
  sweep                      participation-rate sweep on UCI-HAR
  repeat CONFIG --seeds ...  same experiment over several master seeds
  ablate CONFIG --seeds ...  full / no_ipwd / no_bcl / baseline side by side
  dump-features RUN_DIR      encoder features of a finished run's checkpoints

Any config key can be overridden with --set key=value (after FEDCKD_* env
overrides). Exit status: 0 ok, 1 other error, 2 configuration, 3 dataset
parse, 4 output I/O, 5 run diverged.
"""

import argparse
import asyncio
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import structlog

from core.config import ExperimentConfig, apply_overrides, env_overrides, load_config, parse_overrides
from core.errors import ConfigurationError, LabError
from core.log_config import configure_logging
from core.orchestrator import (
    SUMMARY_COLUMNS,
    ExperimentResult,
    summary_row,
    load_datasets,
    run_ablation,
    run_experiment,
    run_repeats,
    write_summary_table,
)
from core.presets import SWEEP_RATES, participation_sweep, preset
from skills.dump_features import DumpFeatures
from skills.save_checkpoints import load_checkpoint_models
from skills.write_metrics import manifest_path_for

logger = structlog.get_logger(__name__)

IO_EXIT_CODE = 4
DIVERGED_EXIT_CODE = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Heterogeneous federated distillation lab")
    parser.add_argument("--log-level", default=None, help="Override the log level")
    parser.add_argument("--json-logs", action="store_true", help="Emit JSON log lines")
    sub = parser.add_subparsers(dest="verb", required=True)

    def overridable(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a config key (repeatable)")
        return p

    run = overridable(sub.add_parser("run", help="Run one experiment from a config file"))
    run.add_argument("config", type=str)

    pre = overridable(sub.add_parser("preset", help="Run a named preset"))
    pre.add_argument("name", type=str)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--full-scale", action="store_true", help="1000 rounds instead of 100")
    pre.add_argument("--data-dir", type=str, default=None)

    sweep = overridable(sub.add_parser("sweep", help="Participation-rate sweep on UCI-HAR"))
    sweep.add_argument("--rates", type=str, default=None, help="Comma-separated jr values, e.g. 1,1/3,1/9")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--full-scale", action="store_true")
    sweep.add_argument("--data-dir", type=str, default=None)

    for verb, help_text in (("repeat", "Repeat an experiment over seeds"), ("ablate", "Compare protocol variants")):
        p = overridable(sub.add_parser(verb, help=help_text))
        p.add_argument("config", type=str)
        p.add_argument("--seeds", type=str, default="0,1,2,3,4")

    dump = sub.add_parser("dump-features", help="Dump encoder features of a finished run")
    dump.add_argument("run_dir", type=str)
    dump.add_argument("--samples", type=int, default=500)
    dump.add_argument("--out", type=str, default=None)
    dump.add_argument("--seed", type=int, default=0)
    return parser


def resolve_overrides(assignments: Sequence[str]) -> Dict[str, Any]:
    overrides = env_overrides()
    overrides.update(parse_overrides(list(assignments)))
    return overrides


def parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(token) for token in text.split(",") if token.strip()]
    except ValueError as e:
        raise ConfigurationError(f"seeds must be integers: {text!r}", keys=["seeds"]) from e
    if not seeds:
        raise ConfigurationError("at least one seed is required", keys=["seeds"])
    return seeds


def parse_rates(text: Optional[str]) -> List[Fraction]:
    if text is None:
        return list(SWEEP_RATES)
    try:
        rates = [Fraction(token.strip()) for token in text.split(",") if token.strip()]
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigurationError(f"rates must be fractions: {text!r}", keys=["rates"]) from e
    unknown = [r for r in rates if r not in SWEEP_RATES]
    if unknown or not rates:
        raise ConfigurationError(
            f"rates must be among {', '.join(str(r) for r in SWEEP_RATES)}", keys=["rates"]
        )
    return rates


def configure_from(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    configure_logging(args.log_level or cfg.log_level, json_output=args.json_logs)


def _print(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _exit_for(results: Sequence[ExperimentResult]) -> int:
    return DIVERGED_EXIT_CODE if any(r.diverged for r in results) else 0


async def cmd_run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), resolve_overrides(args.overrides))
    configure_from(cfg, args)
    result = await run_experiment(cfg)
    _print({"output_dir": str(result.output_dir), "summary": result.summary.to_dict()})
    return _exit_for([result])


async def _run_all(configs: Sequence[ExperimentConfig]) -> List[ExperimentResult]:
    results = []
    for cfg in configs:
        results.append(await run_experiment(cfg))
    return results


async def cmd_preset(args: argparse.Namespace) -> int:
    overrides = resolve_overrides(args.overrides)
    configs = [apply_overrides(c, overrides) for c in preset(args.name, args.seed, args.full_scale, args.data_dir)]
    configure_from(configs[0], args)
    results = await _run_all(configs)
    _print({"runs": [{"output_dir": str(r.output_dir), "summary": r.summary.to_dict()} for r in results]})
    return _exit_for(results)


def plan_sweep(args: argparse.Namespace) -> Tuple[Path, List[ExperimentConfig]]:
    """Sweep root and one config per requested rate; an output_dir override names the root."""
    rates = parse_rates(args.rates)
    overrides = resolve_overrides(args.overrides)
    root_override = overrides.pop("output_dir", None)
    root: Optional[Path] = Path(root_override) if root_override else None
    configs = []
    for rate, cfg in zip(SWEEP_RATES, participation_sweep(args.seed, args.full_scale, args.data_dir)):
        if rate not in rates:
            continue
        run_dir = Path(cfg.output_dir)
        if root is None:
            root = run_dir.parent
        configs.append(apply_overrides(cfg, {**overrides, "output_dir": str(root / run_dir.name)}))
    return root, configs


async def cmd_sweep(args: argparse.Namespace) -> int:
    root, configs = plan_sweep(args)
    configure_from(configs[0], args)
    results = await _run_all(configs)
    rows = []
    for cfg, result in zip(configs, results):
        rate = Fraction(cfg.participants, cfg.clients)
        rows.append(summary_row(f"{rate.numerator}/{rate.denominator}", cfg.seed, result.summary))
    table = write_summary_table(rows, root / f"jr-sweep-seed{args.seed}.csv", ("jr",) + SUMMARY_COLUMNS[1:])
    _print({"table": str(table), "runs": [r.summary.to_dict() for r in results]})
    return _exit_for(results)


async def cmd_repeat(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), resolve_overrides(args.overrides))
    configure_from(cfg, args)
    results = await run_repeats(cfg, parse_seeds(args.seeds))
    _print({"runs": [r.summary.to_dict() for r in results]})
    return _exit_for(results)


async def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), resolve_overrides(args.overrides))
    configure_from(cfg, args)
    report = await run_ablation(cfg, parse_seeds(args.seeds))
    _print({"table": report["table"], "reversed_seeds": report["reversed_seeds"]})
    all_results = [r for results in report["results"].values() for r in results]
    return _exit_for(all_results)


async def cmd_dump_features(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    cfg = load_config(manifest_path_for(run_dir / "metrics.csv"))
    configure_from(cfg, args)
    _, test = load_datasets(cfg)
    out = Path(args.out) if args.out else run_dir / "features.csv"
    models = load_checkpoint_models(run_dir / "checkpoints")
    dumped = await DumpFeatures().execute(
        {"models": models, "dataset": test, "sample_count": args.samples, "path": out, "seed": args.seed}
    )
    dumped.raise_for_failure()
    _print({"path": str(out), "models": len(models), "rows": len(models) * args.samples})
    return 0


COMMANDS = {
    "run": cmd_run,
    "preset": cmd_preset,
    "sweep": cmd_sweep,
    "repeat": cmd_repeat,
    "ablate": cmd_ablate,
    "dump-features": cmd_dump_features,
}


async def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return await COMMANDS[args.verb](args)
    except LabError as e:
        logger.error("command_failed", verb=args.verb, category=type(e).__name__, error=str(e))
        print(f"error ({type(e).__name__}): {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("command_failed", verb=args.verb, category="OSError", error=str(e))
        print(f"error (OSError): {e}", file=sys.stderr)
        return IO_EXIT_CODE


def cli() -> None:
    sys.exit(asyncio.run(main()))


if __name__ == "__main__":
    cli()
