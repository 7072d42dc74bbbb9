"""
Experiment presets.

S@N: N total clients, 10 participating per round, synthetic desk-scale data.
jr-sweep: UCI-HAR at participation rates 1, 2/3, 1/3, 1/9.
smoke: the 3-class end-to-end check (20 clients, 5 per round).

Desk presets run 100 rounds; full_scale restores 1000.
"""

from fractions import Fraction
from typing import Any, Dict, List, Optional

from .config import DatasetChoice, ExperimentConfig, config_from_mapping
from .errors import ConfigurationError

SCALE_PRESETS = (10, 20, 50, 100, 200, 500)
SWEEP_RATES = (Fraction(1), Fraction(2, 3), Fraction(1, 3), Fraction(1, 9))
SWEEP_CLIENTS = 18
DESK_ROUNDS = 100
FULL_ROUNDS = 1000
DEFAULT_UCIHAR_DIR = "data/UCI HAR Dataset"

DESK_RATES: Dict[str, Any] = {
    "lr": 0.05,
    "generator_lr": 0.01,
    "local_epochs": 1,
    "pseudo_batch": 64,
    "dirichlet_alpha": 0.1,
}


def preset_names() -> List[str]:
    return [f"S@{n}" for n in SCALE_PRESETS] + ["jr-sweep", "smoke"]


def _rounds(full_scale: bool) -> int:
    return FULL_ROUNDS if full_scale else DESK_ROUNDS


def scale_preset(clients: int, seed: int = 0, full_scale: bool = False) -> ExperimentConfig:
    return config_from_mapping({
        **DESK_RATES,
        "dataset": DatasetChoice.SYNTHETIC.value,
        "clients": clients,
        "participants": 10,
        "seed": seed,
        "rounds": _rounds(full_scale),
        "heterogeneity": "heterogeneous",
        "class_count": 5,
        "input_extent": 20,
        "synthetic_samples": max(3000, 20 * clients),
        "synthetic_test_samples": 1000,
        "full_scale": full_scale,
        "output_dir": f"runs/S@{clients}-seed{seed}",
    })


def participation_sweep(
    seed: int = 0,
    full_scale: bool = False,
    data_dir: Optional[str] = None,
    clients: int = SWEEP_CLIENTS,
) -> List[ExperimentConfig]:
    """One UCI-HAR config per participation rate jr."""
    configs = []
    for rate in SWEEP_RATES:
        participants = max(1, int(clients * rate))
        configs.append(config_from_mapping({
            **DESK_RATES,
            "dataset": DatasetChoice.UCIHAR.value,
            "data_dir": data_dir or DEFAULT_UCIHAR_DIR,
            "clients": clients,
            "participants": participants,
            "seed": seed,
            "rounds": _rounds(full_scale),
            "heterogeneity": "heterogeneous",
            "full_scale": full_scale,
            "output_dir": f"runs/jr-{rate.numerator}_{rate.denominator}-seed{seed}",
        }))
    return configs


def smoke_preset(seed: int = 0) -> ExperimentConfig:
    return config_from_mapping({
        **DESK_RATES,
        "dataset": DatasetChoice.SYNTHETIC.value,
        "clients": 20,
        "participants": 5,
        "seed": seed,
        "rounds": DESK_ROUNDS,
        "heterogeneity": "heterogeneous",
        "class_count": 3,
        "input_extent": 10,
        "output_dir": f"runs/smoke-seed{seed}",
    })


def preset(name: str, seed: int = 0, full_scale: bool = False, data_dir: Optional[str] = None) -> List[ExperimentConfig]:
    """Resolve a preset name to its configuration(s)."""
    if name.startswith("S@"):
        try:
            clients = int(name[2:])
        except ValueError:
            clients = -1
        if clients in SCALE_PRESETS:
            return [scale_preset(clients, seed, full_scale)]
    if name == "jr-sweep":
        return participation_sweep(seed, full_scale, data_dir)
    if name == "smoke":
        return [smoke_preset(seed)]
    raise ConfigurationError(
        f"unknown preset {name!r}; known presets: {', '.join(preset_names())}",
        keys=["preset"],
    )
