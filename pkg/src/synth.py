"""
Procedural base videos, corruption injection and weakly labelled datasets.

A generated corpus stands in for videos recorded while reproducing driver
bugs: label-1 videos carry corruption events only with probability
p_corrupt, label-0 videos never do. Every video and every event draws from
its own SplitMix64 sub-seed, so the corpus does not depend on generation
order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np

from src.config import FRAME_SIZE, SEED
from src.corruptions import CORRUPTIONS, CorruptionEvent, CorruptionKind, get_corruption
from src.errors import ConfigError, DataError, RangeError
from src.formats import DatasetManifest, ManifestEntry
from src.rng import SplitMix64, derive_seed
from src.video import check_video, write_video

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
# frames rendered per vectorised call
RENDER_CHUNK = 64


class Motion(str, Enum):
    GRADIENT = "gradient"
    RECTANGLES = "rectangles"
    BARS = "bars"


@dataclass
class SceneSpec:
    """What a clean base video shows."""
    resolution: tuple[int, int] = (FRAME_SIZE, FRAME_SIZE)
    motion: Motion = Motion.GRADIENT
    palette_seed: int = 0

    def validate(self) -> None:
        h, w = self.resolution
        if h < MIN_RESOLUTION or w < MIN_RESOLUTION:
            raise ConfigError(f"Scene resolution {h}x{w} is below {MIN_RESOLUTION}x{MIN_RESOLUTION}")


def _triangle(x: np.ndarray) -> np.ndarray:
    """Period-2 triangle wave in [0, 1]."""
    return np.abs(np.mod(x, 2.0) - 1.0)


def _bounce(p0: float, v: float, t: int, span: float) -> float:
    """Position of a point bouncing between 0 and span."""
    if span <= 0:
        return 0.0
    return span * float(_triangle(np.array((p0 + v * t) / span + 1.0)))


class _SceneRenderer:
    """Draws frames of one scene; all randomness is fixed at construction.

    Methods take a vector of frame indices and return a (len(t), h, w, 3)
    float stack.
    """

    def __init__(self, spec: SceneSpec, seed: int):
        self.spec = spec
        self.h, self.w = spec.resolution
        rng = SplitMix64(derive_seed(seed, spec.palette_seed))
        self.y, self.x = np.mgrid[0:self.h, 0:self.w].astype(np.float64)
        # static fine texture so no region of a clean frame is perfectly flat
        self.texture = ((self.x * 7 + self.y * 13) % 5)[:, :, None] * 3.0 - 6.0

        self.slopes = rng.uniform_array(0.5, 3.0, (3, 2))
        self.speeds = rng.uniform_array(1.0, 4.0, 3)
        self.phases = rng.uniform_array(0.0, 256.0, 3)

        self.rects = []
        for _ in range(rng.randint(3, 5)):
            rh, rw = rng.randint(12, max(12, self.h // 3)), rng.randint(12, max(12, self.w // 3))
            self.rects.append({
                "size": (rh, rw),
                "pos": (rng.uniform(0, self.h - rh), rng.uniform(0, self.w - rw)),
                "vel": (rng.choice([-1, 1]) * rng.uniform(1.0, 3.0),
                        rng.choice([-1, 1]) * rng.uniform(1.0, 3.0)),
                "color": rng.uniform_array(30.0, 225.0, 3),
            })

        self.bar_height = rng.randint(6, 12)
        self.bar_speed = rng.randint(1, 3)
        self.bar_colors = rng.uniform_array(20.0, 235.0, (64, 3))
        self._backdrop: Optional[np.ndarray] = None

    def _gradient(self, t: np.ndarray, contrast: float = 1.0) -> np.ndarray:
        frames = np.empty((len(t), self.h, self.w, 3))
        for c in range(3):
            plane = self.slopes[c, 0] * self.x + self.slopes[c, 1] * self.y
            ramp = (plane[None] + (self.speeds[c] * t)[:, None, None] + self.phases[c]) / 128.0
            frames[..., c] = 128.0 + contrast * 127.0 * (_triangle(ramp) * 2.0 - 1.0)
        return frames

    def _rectangles(self, t: np.ndarray) -> np.ndarray:
        if self._backdrop is None:
            self._backdrop = self._gradient(np.zeros(1), contrast=0.25)[0]
        frames = np.repeat(self._backdrop[None], len(t), axis=0)
        for i, ti in enumerate(t):
            for r in self.rects:
                rh, rw = r["size"]
                top = int(_bounce(r["pos"][0], r["vel"][0], int(ti), self.h - rh))
                left = int(_bounce(r["pos"][1], r["vel"][1], int(ti), self.w - rw))
                frames[i, top:top + rh, left:left + rw] = r["color"]
        return frames

    def _bars(self, t: np.ndarray) -> np.ndarray:
        rows = self.y[None] + (self.bar_speed * t)[:, None, None]
        bar = (rows // self.bar_height).astype(np.int64)
        frames = self.bar_colors[bar % len(self.bar_colors)]
        within = rows % self.bar_height
        glyphs = ((self.x.astype(np.int64)[None] + bar * 7) // 4) % 3 == 0
        ink = glyphs & (within >= 2) & (within < self.bar_height - 2)
        frames[ink] *= 0.3
        return frames

    def frames(self, t: np.ndarray) -> np.ndarray:
        """uint8 frames for the indices in t."""
        draw = {
            Motion.GRADIENT: self._gradient,
            Motion.RECTANGLES: self._rectangles,
            Motion.BARS: self._bars,
        }[self.spec.motion]
        t = np.asarray(t, dtype=np.int64)
        return np.clip(np.rint(draw(t) + self.texture), 0, 255).astype(np.uint8)


def render_base_video(spec: SceneSpec, n_frames: int, seed: int) -> np.ndarray:
    """Render a clean, moving (n_frames, h, w, 3) uint8 video."""
    spec.validate()
    if n_frames < 1:
        raise ConfigError(f"n_frames must be >= 1, got {n_frames}")
    renderer = _SceneRenderer(spec, seed)
    video = np.empty((n_frames, *spec.resolution, 3), dtype=np.uint8)
    for start in range(0, n_frames, RENDER_CHUNK):
        t = np.arange(start, min(start + RENDER_CHUNK, n_frames))
        video[start:start + len(t)] = renderer.frames(t)
    return video


def inject(video: np.ndarray, event: CorruptionEvent) -> np.ndarray:
    """Return a copy of video with one corruption event applied.

    Frames outside [start, start + duration) are left untouched.
    """
    check_video(video)
    if event.duration < 1 or event.start_frame < 0 or event.end_frame > len(video):
        raise RangeError(
            f"{event.kind.value} event [{event.start_frame}, {event.end_frame}) "
            f"outside video of {len(video)} frames"
        )
    out = video.copy()
    s, e = event.start_frame, event.end_frame
    out[s:e] = get_corruption(event.kind).apply(out[s:e].copy(), event.params)
    return out


def _kinds(values: Optional[list[str]]) -> list[CorruptionKind]:
    if values is None:
        return list(CORRUPTIONS)
    try:
        kinds = [CorruptionKind(v) for v in values]
    except ValueError as e:
        raise ConfigError(f"Unknown corruption kind: {e}") from e
    if not kinds:
        raise ConfigError("Kind list must not be empty")
    return kinds


@dataclass
class GeneratorConfig:
    """Size, noise level and layout of a generated dataset."""
    n_corrupted: int = 30
    n_normal: int = 30
    frames_per_video: int = 512
    p_corrupt: float = 1.0
    events_per_positive: tuple[int, int] = (1, 2)
    seed: int = SEED
    resolution: tuple[int, int] = (FRAME_SIZE, FRAME_SIZE)
    train_fraction: float = 0.5
    validation_fraction: float = 0.25
    train_kinds: Optional[list[str]] = None  # None = every kind
    test_kinds: Optional[list[str]] = None
    motions: list[str] = field(default_factory=lambda: [m.value for m in Motion])

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown synth options: {sorted(unknown)}")
        values = dict(data)
        for key in ("events_per_positive", "resolution"):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)

    def validate(self) -> None:
        if self.n_corrupted < 0 or self.n_normal < 0:
            raise ConfigError("Video counts must be >= 0")
        if self.frames_per_video < 1:
            raise ConfigError("frames_per_video must be >= 1")
        if not 0.0 <= self.p_corrupt <= 1.0:
            raise ConfigError(f"p_corrupt must lie in [0, 1], got {self.p_corrupt}")
        low, high = self.events_per_positive
        if not 1 <= low <= high:
            raise ConfigError(f"events_per_positive must satisfy 1 <= low <= high, got {(low, high)}")
        if self.train_fraction < 0 or self.validation_fraction < 0 \
                or self.train_fraction + self.validation_fraction > 1:
            raise ConfigError("Split fractions must be >= 0 and sum to at most 1")
        _kinds(self.train_kinds)
        _kinds(self.test_kinds)
        try:
            [Motion(m) for m in self.motions]
        except ValueError as e:
            raise ConfigError(f"Unknown motion: {e}") from e
        SceneSpec(tuple(self.resolution)).validate()

    def split_of(self, position: int, count: int) -> str:
        """Split of the position-th video among count videos of one label."""
        n_train = math.floor(count * self.train_fraction + 0.5)
        n_val = math.floor(count * (self.train_fraction + self.validation_fraction) + 0.5)
        if position < n_train:
            return "train"
        if position < n_val:
            return "validation"
        return "test"


def generate_video(config: GeneratorConfig, index: int, label: int,
                   split: str) -> tuple[np.ndarray, list[CorruptionEvent]]:
    """Render one dataset video and its ground-truth events."""
    rng = SplitMix64(derive_seed(config.seed, index))
    spec = SceneSpec(
        resolution=tuple(config.resolution),
        motion=Motion(rng.choice(config.motions)),
        palette_seed=rng.next_u64(),
    )
    video = render_base_video(spec, config.frames_per_video, rng.next_u64())

    events: list[CorruptionEvent] = []
    if label == 1 and rng.random() < config.p_corrupt:
        allowed = _kinds(config.test_kinds if split == "test" else config.train_kinds)
        h, w = config.resolution
        for e in range(rng.randint(*config.events_per_positive)):
            event_rng = SplitMix64(derive_seed(config.seed, index, e))
            corruption = get_corruption(event_rng.choice(allowed))
            event = corruption.random_event(event_rng, len(video), h, w)
            video = inject(video, event)
            events.append(event)
    return video, events


def generate_dataset(config: GeneratorConfig, out_dir: Path) -> DatasetManifest:
    """Write a weakly labelled corpus and its manifest to out_dir."""
    config.validate()
    out_dir = Path(out_dir)
    try:
        (out_dir / "videos").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create output directory {out_dir}: {e}") from e

    plan = [(1, k, config.n_corrupted) for k in range(config.n_corrupted)]
    plan += [(0, k, config.n_normal) for k in range(config.n_normal)]

    entries = []
    for index, (label, position, count) in enumerate(plan):
        split = config.split_of(position, count)
        video, events = generate_video(config, index, label, split)
        rel = f"videos/{index:05d}.wmvd"
        try:
            write_video(out_dir / rel, video)
        except OSError as e:
            raise DataError(f"Cannot write {out_dir / rel}: {e}") from e
        entries.append(ManifestEntry(rel, label, split, events))
        logger.info(
            f"[synth] {rel} label={label} split={split} "
            f"events={[ev.kind.value for ev in events] or '-'}"
        )

    manifest = DatasetManifest(entries, root=out_dir)
    manifest.save(out_dir / "manifest.json")
    n_clean_positive = sum(1 for e in entries if e.label == 1 and not e.events)
    logger.info(
        f"[synth] {len(entries)} videos written to {out_dir} "
        f"({n_clean_positive} label-1 videos without events)"
    )
    return manifest
