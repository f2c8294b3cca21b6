from abc import ABC, abstractmethod
from dataclasses import dataclass
import logging

import numpy as np

from src.config import BAG_LENGTH, SEGMENT_LENGTH
from src.formats import BagRecord, DatasetManifest, ManifestEntry
from src.video import read_video_header

logger = logging.getLogger(__name__)


@dataclass
class FeatureBag:
    """Per-segment feature vectors of one bag."""
    bag_id: str
    vectors: np.ndarray  # (n_segments, dim) float64

    @property
    def n_segments(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def bag_records(entry: ManifestEntry, n_frames: int, bag_len: int = BAG_LENGTH) -> list[BagRecord]:
    """Metadata for every full bag of a manifest video."""
    return [
        BagRecord(
            bag_id=f"{entry.path}#{b}",
            source=entry.path,
            start_frame=b * bag_len,
            label=entry.label,
            split=entry.split,
            kinds=entry.kinds(b * bag_len, (b + 1) * bag_len),
        )
        for b in range(n_frames // bag_len)
    ]


class FeatureExtractor(ABC):
    """Abstract base class for per-segment feature sources."""

    name: str = "base"

    def __init__(self, bag_len: int = BAG_LENGTH, seg_len: int = SEGMENT_LENGTH):
        self.bag_len = bag_len
        self.seg_len = seg_len

    def records(self, manifest: DatasetManifest, entries: list[ManifestEntry]) -> list[BagRecord]:
        """Bag metadata for entries, from video headers only."""
        records = []
        for entry in entries:
            n_frames, _, _ = read_video_header(manifest.resolve(entry))
            records.extend(bag_records(entry, n_frames, self.bag_len))
        return records

    @abstractmethod
    def validate(self, manifest: DatasetManifest) -> None:
        """Check inputs before any output is written."""
        pass

    @abstractmethod
    def extract_split(self, manifest: DatasetManifest, split: str) -> tuple[np.ndarray, list[BagRecord]]:
        """
        Produce features for every bag of one split.

        Args:
            manifest: Dataset manifest
            split: train, validation or test

        Returns:
            Tuple of ((n_bags, segments_per_bag, dim) array, bag records)
        """
        pass
