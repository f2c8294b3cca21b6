"""Whole-frame intensity corruptions: green flash, blackout and flicker."""

from typing import Any

import numpy as np

from src.rng import SplitMix64
from .base import Corruption, CorruptionKind

GREEN = np.array([0, 255, 0], dtype=np.uint8)


class GreenFlashCorruption(Corruption):
    """Frames replaced by solid green."""

    kind = CorruptionKind.GREEN_FLASH
    duration_range = (1, 3)

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        frames[...] = GREEN
        return frames


class SuddenBlackoutCorruption(Corruption):
    """Frames replaced by solid black."""

    kind = CorruptionKind.SUDDEN_BLACKOUT
    duration_range = (8, 48)

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        frames[...] = 0
        return frames


class FlickerCorruption(Corruption):
    """Brightness alternating between gain g and 1 on successive frames.

    The first frame of the event is scaled, the second untouched, and so on.
    Scaled samples are rounded half up and clamped to [0, 255].
    """

    kind = CorruptionKind.FLICKER

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {"gain": round(rng.uniform(1.4, 2.0), 3)}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        gain = float(params.get("gain", 1.6))
        scaled = frames[::2].astype(np.float64) * gain
        frames[::2] = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
        return frames
