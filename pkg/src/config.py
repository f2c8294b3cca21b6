import json
import os
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from src.errors import ConfigError

load_dotenv()

# Project root
ROOT_DIR = Path(__file__).parent.parent

CONFIG_VERSION = 1


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


# Bag geometry
BAG_LENGTH = int(os.getenv("BAG_LENGTH", "512"))
SEGMENT_LENGTH = int(os.getenv("SEGMENT_LENGTH", "16"))
FRAME_SIZE = int(os.getenv("FRAME_SIZE", "112"))

# Scoring head
HIDDEN_DIMS = _ints(os.getenv("HIDDEN_DIMS", "512,32"))
ATTENTION_DIM = int(os.getenv("ATTENTION_DIM", "16"))
DROPOUT_RATE = float(os.getenv("DROPOUT_RATE", "0.6"))
REG_LAMBDA = float(os.getenv("REG_LAMBDA", "1e-3"))

# Optimisers
ADAGRAD_LR = float(os.getenv("ADAGRAD_LR", "0.1"))
ADAGRAD_EPS = float(os.getenv("ADAGRAD_EPS", "1e-8"))
ADAM_LR = float(os.getenv("ADAM_LR", "1e-3"))
ADAM_BETAS = tuple(_floats(os.getenv("ADAM_BETAS", "0.9,0.999")))
ADAM_EPS = float(os.getenv("ADAM_EPS", "1e-8"))

# Training loop
PAIRS_PER_BATCH = int(os.getenv("PAIRS_PER_BATCH", "30"))
EPOCHS = int(os.getenv("EPOCHS", "30"))
SEED = int(os.getenv("SEED", "7"))

# Evaluation
TARGET_FPR = float(os.getenv("TARGET_FPR", "0.001"))

# Energy baseline
ENERGY_PATCH = int(os.getenv("ENERGY_PATCH", "32"))
ENERGY_K = int(os.getenv("ENERGY_K", "3"))
ENERGY_WINDOW = int(os.getenv("ENERGY_WINDOW", "3"))
ENERGY_CROP = int(os.getenv("ENERGY_CROP", "96"))

# Run history (empty = disabled)
RUNS_DATABASE = Path(os.getenv("RUNS_DATABASE")) if os.getenv("RUNS_DATABASE") else None

# Extra log file (empty = stderr only)
LOG_FILE = Path(os.getenv("LOG_FILE")) if os.getenv("LOG_FILE") else None

# Sections a run config file may contain
CONFIG_SECTIONS = {"version", "seed", "synth", "features", "train", "tune", "eval", "baseline"}


def load_run_config(path: Path) -> dict[str, Any]:
    """Load and validate a JSON run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"Config file {path} has version {data.get('version')!r}, expected {CONFIG_VERSION}"
        )

    unknown = set(data) - CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"Unknown config sections in {path}: {sorted(unknown)}")

    return data


def merge_options(defaults: dict[str, Any], file_values: dict[str, Any] | None,
                  flags: dict[str, Any]) -> dict[str, Any]:
    """Combine environment defaults, config file values and CLI flags.

    Later sources win; flags left at None do not override.
    """
    merged = dict(defaults)
    for key, value in (file_values or {}).items():
        if key not in merged:
            raise ConfigError(f"Unknown option {key!r}; expected one of {sorted(merged)}")
        merged[key] = value
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return merged
