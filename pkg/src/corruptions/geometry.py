"""Corruptions that displace or blank parts of the frame layout."""

import math
from typing import Any

import numpy as np

from src.errors import RangeError
from src.rng import SplitMix64
from .base import Corruption, CorruptionKind

MAX_SPLIT_FRACTION = 0.5


class HalfScreenCorruption(Corruption):
    """Left half of the screen (ceil(w/2) columns) goes black."""

    kind = CorruptionKind.HALF_SCREEN

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        width = frames.shape[2]
        frames[:, :, :(width + 1) // 2] = 0
        return frames


class BottomSplitCorruption(Corruption):
    """
    Bottom rows replaced by a copy of the rows just above them.

    The split covers min(ceil(f * h), floor(h / 2)) rows so the copied band
    always fits above it; for odd h and f = 0.5 that is one row fewer than
    ceil(f * h). Fractions outside [0, 0.5] are rejected.
    """

    kind = CorruptionKind.BOTTOM_SPLIT

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {"fraction": round(rng.uniform(0.2, 0.5), 3)}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        height = frames.shape[1]
        fraction = float(params.get("fraction", 0.25))
        if not 0.0 <= fraction <= MAX_SPLIT_FRACTION:
            raise RangeError(
                f"BottomSplit fraction must lie in [0, {MAX_SPLIT_FRACTION}], got {fraction}"
            )
        rows = min(math.ceil(fraction * height), height // 2)
        if rows > 0:
            frames[:, height - rows:] = frames[:, height - 2 * rows:height - rows].copy()
        return frames


class DisplayStrideCorruption(Corruption):
    """Row r shifted circularly right by (r * delta) mod w pixels."""

    kind = CorruptionKind.DISPLAY_STRIDE

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {"delta": rng.randint(1, 8)}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        _, height, width, _ = frames.shape
        delta = int(params.get("delta", 3))
        shifts = (np.arange(height) * delta) % width
        # out[r, c] = in[r, (c - shift_r) mod w]
        cols = (np.arange(width)[None, :] - shifts[:, None]) % width
        rows = np.arange(height)[:, None]
        frames[...] = frames[:, rows, cols]
        return frames


class LinesCorruption(Corruption):
    """Every k-th row (or column) painted white."""

    kind = CorruptionKind.LINES

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {
            "spacing": rng.randint(4, 12),
            "axis": rng.choice(["rows", "columns"]),
        }

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        spacing = max(int(params.get("spacing", 8)), 1)
        if params.get("axis", "rows") == "columns":
            frames[:, :, ::spacing] = 255
        else:
            frames[:, ::spacing] = 255
        return frames
