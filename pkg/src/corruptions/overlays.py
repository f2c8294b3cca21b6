"""Corruptions that overwrite colours or paint foreign content."""

from typing import Any

import numpy as np

from src.rng import SplitMix64
from .base import Corruption, CorruptionKind

BLOCK = 16
POPUP_FILL = 200


class ColorSpaceChangeCorruption(Corruption):
    """Channel rotation R->G->B->R."""

    kind = CorruptionKind.COLOR_SPACE_CHANGE

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {}

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        # new G = old R, new B = old G, new R = old B
        frames[...] = frames[..., [2, 0, 1]]
        return frames


class MessagePopupCorruption(Corruption):
    """A grey dialog box with a 1-pixel black border."""

    kind = CorruptionKind.MESSAGE_POPUP

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        box_h = rng.randint(max(height // 4, 3), max(height // 2, 3))
        box_w = rng.randint(max(width // 3, 3), max(2 * width // 3, 3))
        return {
            "top": rng.randint(0, height - box_h),
            "left": rng.randint(0, width - box_w),
            "height": box_h,
            "width": box_w,
        }

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        top, left = int(params["top"]), int(params["left"])
        bottom = top + int(params["height"])
        right = left + int(params["width"])
        frames[:, top:bottom, left:right] = 0
        frames[:, top + 1:bottom - 1, left + 1:right - 1] = POPUP_FILL
        return frames


class MacroBlockCorruption(Corruption):
    """Grid-aligned 16x16 blocks filled with random flat colours.

    Block positions and colours come from the event's own seed, so every
    frame of the event shows the same blocks.
    """

    kind = CorruptionKind.MACRO_BLOCK

    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        return {"blocks": rng.randint(4, 12), "seed": rng.next_u64()}

    def layout(self, params: dict[str, Any], height: int, width: int) -> list[tuple[int, int, list[int]]]:
        """(top, left, rgb) of every block for an event."""
        rng = SplitMix64(int(params["seed"]))
        grid_rows, grid_cols = height // BLOCK, width // BLOCK
        cells = rng.permutation(grid_rows * grid_cols)[:int(params.get("blocks", 6))]
        return [
            ((cell // grid_cols) * BLOCK, (cell % grid_cols) * BLOCK,
             [rng.randint(0, 255) for _ in range(3)])
            for cell in cells
        ]

    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        for top, left, rgb in self.layout(params, frames.shape[1], frames.shape[2]):
            frames[:, top:top + BLOCK, left:left + BLOCK] = np.array(rgb, dtype=np.uint8)
        return frames
