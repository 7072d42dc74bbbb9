"""
Dump Features Skill

Writes encoder features for external 2-D projection. One row per
sample: tag (client-<id> or global), true label, then the feature vector.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union
import csv

import numpy as np
import structlog

from core.datasets import Dataset
from core.errors import MetricsWriteError, RejectedInputError
from core.models import SplitModel, encode
from core.records import format_number

from .base_skill import BaseSkill, SkillResult

logger = structlog.get_logger(__name__)


def subsample_indices(dataset_size: int, sample_count: int, seed: int) -> np.ndarray:
    """Sorted sample of `sample_count` distinct row indices, fixed by `seed`."""
    if sample_count > dataset_size:
        raise RejectedInputError(f"sample count {sample_count} exceeds dataset size {dataset_size}")
    if sample_count < 0:
        raise RejectedInputError("sample count must be >= 0")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(dataset_size, size=sample_count, replace=False))


def dump_features(
    model: SplitModel,
    dataset: Dataset,
    sample_count: int,
    path: Union[str, Path],
    tag: str = "global",
    seed: int = 0,
    append: bool = False,
) -> Path:
    indices = subsample_indices(len(dataset), sample_count, seed)
    x, y = dataset.subset(indices)
    features = encode(model, x).features if sample_count else np.zeros((0, model.spec.feature_extent))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a" if append else "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            for label, row in zip(y, features):
                writer.writerow([tag, int(label)] + [format_number(v) for v in row])
    except OSError as e:
        raise MetricsWriteError(f"cannot write features: {e}", path=str(path)) from e
    logger.info("features_dumped", path=str(path), tag=tag, rows=int(sample_count))
    return path


class DumpFeatures(BaseSkill):
    """Dump features for several tagged models into one file."""

    name = "dump_features"
    description = "Write (tag, label, features) rows for tagged models"
    required_args = ["models", "dataset", "sample_count", "path"]

    async def execute(self, args: Dict[str, Any], context: Optional[Any] = None) -> SkillResult:
        errors = self.validate_args(args)
        if errors:
            return SkillResult(success=False, error="; ".join(errors))
        models: Sequence[Tuple[str, SplitModel]] = args["models"]
        seed = int(args.get("seed", 0))
        try:
            for position, (tag, model) in enumerate(models):
                dump_features(
                    model,
                    args["dataset"],
                    args["sample_count"],
                    args["path"],
                    tag=tag,
                    seed=seed,
                    append=position > 0,
                )
        except (MetricsWriteError, RejectedInputError) as e:
            return SkillResult(success=False, error=str(e), cause=e)
        result = SkillResult(
            success=True,
            data={"models": len(models), "rows": len(models) * args["sample_count"]},
            artifacts=[str(args["path"])],
        )
        await self.post_execute(result)
        return result
