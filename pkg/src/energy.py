"""
Patch-energy baseline detector.

Frames are resized, centre-cropped and tiled into square patches. A patch's
energy is the L2 norm of its zero-centred samples (each channel minus its
patch mean), so flat regions have zero energy. The frame score is the mean
of the k lowest patch energies; with normalisation each energy is first
divided by the mean energy of the same patch over the preceding frames.
Low scores indicate corruption, so bag scores are negated before being
handed to the shared threshold and metric code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.config import ENERGY_CROP, ENERGY_K, ENERGY_PATCH, ENERGY_WINDOW, FRAME_SIZE
from src.errors import ConfigError, DataError, ShapeError
from src.evaluation import ScoreRow, ScoreTable
from src.formats import DatasetManifest
from src.features import bag_records
from src.video import read_video, resize_video

logger = logging.getLogger(__name__)

NORM_GUARD = 1e-9
CHUNK = 64  # frames per patch-energy batch


@dataclass
class EnergyConfig:
    patch: int = ENERGY_PATCH
    k: int = ENERGY_K
    window: int = ENERGY_WINDOW
    normalize: bool = False
    crop: int = ENERGY_CROP
    frame_size: int = FRAME_SIZE

    @property
    def tag(self) -> str:
        return "energy-norm" if self.normalize else "energy"

    def validate(self) -> None:
        if self.patch < 1 or self.crop % self.patch:
            raise ConfigError(f"Patch size {self.patch} must divide crop size {self.crop}")
        if self.crop > self.frame_size:
            raise ConfigError(f"Crop {self.crop} exceeds frame size {self.frame_size}")
        n_patches = (self.crop // self.patch) ** 2
        if not 1 <= self.k <= n_patches:
            raise ConfigError(f"k must lie in [1, {n_patches}], got {self.k}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")


def patch_energy(frames: np.ndarray, patch: int = ENERGY_PATCH) -> np.ndarray:
    """
    Energy of every patch.

    Args:
        frames: (h, w, c) frame or (n, h, w, c) stack

    Returns:
        (h/patch, w/patch) grid, or (n, h/patch, w/patch) for a stack
    """
    frames = np.asarray(frames, dtype=np.float64)
    h, w, c = frames.shape[-3:]
    if h % patch or w % patch:
        raise ShapeError(f"Frame {h}x{w} is not divisible into {patch}x{patch} patches")
    lead = frames.shape[:-3]
    tiles = frames.reshape(*lead, h // patch, patch, w // patch, patch, c)
    axes = (len(lead) + 1, len(lead) + 3)
    residual = tiles - tiles.mean(axis=axes, keepdims=True)
    return np.sqrt(np.sum(residual * residual, axis=axes + (len(lead) + 4,)))


def _lowest_mean(grids: np.ndarray, k: int) -> np.ndarray:
    flat = grids.reshape(*grids.shape[:-2], -1)
    return np.sort(flat, axis=-1)[..., :k].mean(axis=-1)


def _ratios(energy: np.ndarray, reference: np.ndarray) -> np.ndarray:
    safe = np.where(reference < NORM_GUARD, 1.0, reference)
    return np.where(reference < NORM_GUARD, 1.0, energy / safe)


def frame_score(frame: np.ndarray, config: EnergyConfig,
                history: Optional[np.ndarray] = None) -> float:
    """Mean of the k lowest (optionally normalised) patch energies of a frame."""
    energy = patch_energy(frame, config.patch)
    if config.normalize:
        if history is None or len(history) < config.window:
            raise DataError(f"Normalised energy needs {config.window} preceding frames")
        reference = patch_energy(np.asarray(history)[-config.window:], config.patch).mean(axis=0)
        energy = _ratios(energy, reference)
    return float(_lowest_mean(energy, config.k))


def prepare_frames(video: np.ndarray, config: EnergyConfig) -> np.ndarray:
    """Resize to the working frame size and centre-crop."""
    video = resize_video(video, config.frame_size)
    off = (config.frame_size - config.crop) // 2
    return video[:, off:off + config.crop, off:off + config.crop]


def video_frame_scores(video: np.ndarray, config: EnergyConfig) -> np.ndarray:
    """
    Scores of every frame of a prepared video.

    With normalisation the first ``window`` frames have no history; their
    scores are NaN.
    """
    energy = np.concatenate([
        patch_energy(video[i:i + CHUNK], config.patch) for i in range(0, len(video), CHUNK)
    ]) if len(video) else np.zeros((0, config.crop // config.patch, config.crop // config.patch))
    if not config.normalize:
        return _lowest_mean(energy, config.k)

    scores = np.full(len(video), np.nan)
    if len(video) <= config.window:
        return scores
    n = len(video)
    reference = sum(energy[i:n - config.window + i] for i in range(config.window)) / config.window
    scores[config.window:] = _lowest_mean(_ratios(energy[config.window:], reference), config.k)
    return scores


def energy_score_table(manifest: DatasetManifest, split: str, config: EnergyConfig,
                       bag_len: int) -> ScoreTable:
    """Bag table of negated frame scores (higher = more anomalous)."""
    config.validate()
    rows = []
    for entry in manifest.split(split):
        video = read_video(manifest.resolve(entry))
        records = bag_records(entry, len(video), bag_len)
        if not records:
            continue
        scores = video_frame_scores(prepare_frames(video[: len(records) * bag_len], config), config)
        for b, record in enumerate(records):
            bag = scores[b * bag_len:(b + 1) * bag_len]
            rows.append(ScoreRow(record.bag_id, record.corrupted, -bag[~np.isnan(bag)], record.kinds))
    logger.info(f"[{config.tag}] {split}: scored {len(rows)} bags")
    return ScoreTable(rows)
