import logging

import numpy as np

from src.config import FRAME_SIZE
from src.errors import ShapeError
from src.formats import BagRecord, DatasetManifest
from src.video import Bag, area_average, make_bags, read_video, resize_video
from .base import FeatureExtractor

logger = logging.getLogger(__name__)

GRID = 14
FEATURE_DIM = 2 * GRID * GRID * 3  # 1176


def extract_segment_features(segment: np.ndarray, frame_size: int = FRAME_SIZE) -> np.ndarray:
    """
    Spatiotemporal descriptor of one segment.

    The per-pixel mean frame and the mean absolute frame-to-frame difference
    are each area-averaged to 14x14x3, flattened row-major channel-minor,
    concatenated (mean first) and scaled to [0, 1].
    """
    segment = np.asarray(segment)
    if segment.ndim != 4 or segment.shape[1:] != (frame_size, frame_size, 3) or len(segment) < 2:
        raise ShapeError(
            f"Expected (T>=2, {frame_size}, {frame_size}, 3) segment, got {segment.shape}"
        )

    mean = segment.mean(axis=0, dtype=np.float64)
    diff = np.abs(np.diff(segment.astype(np.int16), axis=0)).mean(axis=0, dtype=np.float64)
    return np.concatenate([
        area_average(mean, GRID, GRID).ravel(),
        area_average(diff, GRID, GRID).ravel(),
    ]) / 255.0


def extract_bag_features(bag: Bag, frame_size: int = FRAME_SIZE) -> np.ndarray:
    """(n_segments, 1176) descriptor matrix of a bag."""
    return np.stack([extract_segment_features(s, frame_size) for s in bag.segments])


class BuiltinExtractor(FeatureExtractor):
    """Deterministic descriptor computed from the videos themselves."""

    name = "builtin"
    dim = FEATURE_DIM

    def __init__(self, frame_size: int = FRAME_SIZE, **kwargs):
        super().__init__(**kwargs)
        self.frame_size = frame_size

    def validate(self, manifest: DatasetManifest) -> None:
        # headers only; raises FormatError on unreadable videos
        self.records(manifest, manifest.entries)

    def extract_split(self, manifest: DatasetManifest, split: str) -> tuple[np.ndarray, list[BagRecord]]:
        entries = manifest.split(split)
        records = self.records(manifest, entries)
        matrices = []

        for entry in entries:
            video = read_video(manifest.resolve(entry))
            if len(video) < self.bag_len:
                logger.warning(f"[{self.name}] {entry.path}: shorter than one bag, skipped")
                continue
            video = resize_video(video[: (len(video) // self.bag_len) * self.bag_len], self.frame_size)
            for bag in make_bags(video, self.bag_len, self.seg_len, source_id=entry.path):
                matrices.append(extract_bag_features(bag, self.frame_size))

        logger.info(f"[{self.name}] {split}: {len(matrices)} bags from {len(entries)} videos")
        segments = self.bag_len // self.seg_len
        features = np.stack(matrices) if matrices else np.zeros((0, segments, self.dim))
        return features, records
