"""
Save Checkpoints Skill

Writes the final global model, the generator and every client model
under `<output>/checkpoints/` so features can be dumped after a run.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog

from core.checkpoint import load_model, save_model
from core.errors import MetricsWriteError, RejectedInputError
from core.generator import save_generator
from core.models import SplitModel
from state.federation_store import ClientStore, ServerState

from .base_skill import BaseSkill, SkillResult

logger = structlog.get_logger(__name__)

GLOBAL_FILE = "global.ckpt"
GENERATOR_FILE = "generator.ckpt"


def client_file(client_id: int) -> str:
    return f"client-{client_id:04d}.ckpt"


def save_checkpoints(server: ServerState, clients: ClientStore, directory: Union[str, Path]) -> List[Path]:
    directory = Path(directory)
    written = [
        save_model(server.global_model, directory / GLOBAL_FILE, tag="global"),
        save_generator(server.generator, directory / GENERATOR_FILE),
    ]
    for client in clients:
        written.append(save_model(client.model, directory / client_file(client.client_id), tag=f"client-{client.client_id}"))
    logger.info("checkpoints_saved", directory=str(directory), files=len(written))
    return written


def load_checkpoint_models(directory: Union[str, Path]) -> List[Tuple[str, SplitModel]]:
    """(tag, model) for the global model followed by every client, in id order."""
    directory = Path(directory)
    global_path = directory / GLOBAL_FILE
    if not global_path.exists():
        raise RejectedInputError(f"no checkpoint at {global_path}")
    models = [("global", load_model(global_path))]
    for path in sorted(directory.glob("client-*.ckpt")):
        models.append((path.stem, load_model(path)))
    return models


class SaveCheckpoints(BaseSkill):
    name = "save_checkpoints"
    description = "Save global, generator and client checkpoints"
    required_args = ["server", "clients", "directory"]

    async def execute(self, args: Dict[str, Any], context: Optional[Any] = None) -> SkillResult:
        errors = self.validate_args(args)
        if errors:
            return SkillResult(success=False, error="; ".join(errors))
        try:
            written = save_checkpoints(args["server"], args["clients"], args["directory"])
        except MetricsWriteError as e:
            return SkillResult(success=False, error=str(e), data={"path": e.path}, cause=e)
        result = SkillResult(
            success=True,
            data={"directory": str(args["directory"]), "files": len(written)},
            artifacts=[str(p) for p in written],
        )
        await self.post_execute(result)
        return result
