from src.errors import ConfigError
from .base import Corruption, CorruptionEvent, CorruptionKind
from .flashes import FlickerCorruption, GreenFlashCorruption, SuddenBlackoutCorruption
from .geometry import (
    BottomSplitCorruption,
    DisplayStrideCorruption,
    HalfScreenCorruption,
    LinesCorruption,
)
from .overlays import ColorSpaceChangeCorruption, MacroBlockCorruption, MessagePopupCorruption

# Registry of available injectors, one per kind
CORRUPTIONS: dict[CorruptionKind, Corruption] = {
    c.kind: c
    for c in (
        FlickerCorruption(),
        DisplayStrideCorruption(),
        LinesCorruption(),
        GreenFlashCorruption(),
        ColorSpaceChangeCorruption(),
        MessagePopupCorruption(),
        MacroBlockCorruption(),
        HalfScreenCorruption(),
        BottomSplitCorruption(),
        SuddenBlackoutCorruption(),
    )
}


def get_corruption(kind: CorruptionKind | str) -> Corruption:
    """Get the injector for a corruption kind (enum or its name)."""
    try:
        return CORRUPTIONS[CorruptionKind(kind)]
    except ValueError:
        raise ConfigError(
            f"Unknown corruption: {kind}. Available: {[k.value for k in CORRUPTIONS]}"
        ) from None


__all__ = [
    "Corruption",
    "CorruptionEvent",
    "CorruptionKind",
    "CORRUPTIONS",
    "get_corruption",
]
