from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any
import logging

import numpy as np

from src.rng import SplitMix64

logger = logging.getLogger(__name__)


class CorruptionKind(str, Enum):
    """Closed catalogue of display corruptions the generator can inject."""
    FLICKER = "Flicker"
    DISPLAY_STRIDE = "DisplayStride"
    LINES = "Lines"
    GREEN_FLASH = "GreenFlash"
    COLOR_SPACE_CHANGE = "ColorSpaceChange"
    MESSAGE_POPUP = "MessagePopup"
    MACRO_BLOCK = "MacroBlock"
    HALF_SCREEN = "HalfScreen"
    BOTTOM_SPLIT = "BottomSplit"
    SUDDEN_BLACKOUT = "SuddenBlackout"


@dataclass
class CorruptionEvent:
    """One corruption occurrence: kind, frame range and kind-specific params."""
    kind: CorruptionKind
    start_frame: int
    duration: int
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def end_frame(self) -> int:
        """Exclusive end of the affected frame range."""
        return self.start_frame + self.duration

    def overlaps(self, start: int, stop: int) -> bool:
        """True if the event touches any frame in [start, stop)."""
        return self.start_frame < stop and start < self.end_frame

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "start": self.start_frame,
            "duration": self.duration,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CorruptionEvent":
        return cls(
            kind=CorruptionKind(data["kind"]),
            start_frame=int(data["start"]),
            duration=int(data["duration"]),
            params=dict(data.get("params") or {}),
        )


class Corruption(ABC):
    """Abstract base class for a corruption injector.

    Subclasses define the pixel-level effect on the frames of an event.
    """

    kind: CorruptionKind
    # Inclusive duration range (frames) used when placing random events
    duration_range: tuple[int, int] = (16, 128)

    @property
    def name(self) -> str:
        return self.kind.value

    @abstractmethod
    def default_params(self, rng: SplitMix64, height: int, width: int) -> dict[str, Any]:
        """
        Draw a parameterisation for a new event.

        Args:
            rng: Event-local generator
            height: Frame height in pixels
            width: Frame width in pixels

        Returns:
            JSON-serialisable parameter dict
        """
        pass

    @abstractmethod
    def apply(self, frames: np.ndarray, params: dict[str, Any]) -> np.ndarray:
        """
        Corrupt the frames of one event.

        Args:
            frames: (duration, h, w, 3) uint8 copy of the affected frames
            params: Parameters recorded for the event

        Returns:
            Corrupted frames with the same shape and dtype
        """
        pass

    def random_event(self, rng: SplitMix64, n_frames: int, height: int, width: int) -> CorruptionEvent:
        """Place an event uniformly within a video of n_frames frames."""
        low, high = self.duration_range
        duration = rng.randint(min(low, n_frames), min(high, n_frames))
        start = rng.randint(0, n_frames - duration)
        params = self.default_params(rng, height, width)
        logger.debug(f"[{self.name}] event at {start} for {duration} frames: {params}")
        return CorruptionEvent(self.kind, start, duration, params)
