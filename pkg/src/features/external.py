import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from src.errors import ConfigError, EmptyInputError
from src.formats import BagRecord, DatasetManifest, load_features
from .base import FeatureBag, FeatureExtractor

logger = logging.getLogger(__name__)


def import_external_features(paths: Sequence[Path]) -> list[FeatureBag]:
    """
    Load precomputed features (e.g. 4096-dim C3D activations) from WMIL files.

    All files must agree on segments per bag and feature dimension.
    """
    if not paths:
        raise ConfigError("No feature files given")
    bags: list[FeatureBag] = []
    geometry = None
    for path in paths:
        array = load_features(path)
        if geometry is None:
            geometry = array.shape[1:]
        elif array.shape[1:] != geometry:
            raise ConfigError(
                f"{path}: {array.shape[1]}x{array.shape[2]} bags do not match "
                f"{geometry[0]}x{geometry[1]} of earlier files"
            )
        stem = Path(path).stem
        bags.extend(FeatureBag(f"{stem}#{i}", vectors) for i, vectors in enumerate(array))
    return bags


class ExternalFeatureImporter(FeatureExtractor):
    """
    Features computed elsewhere, one row per manifest bag in manifest order.

    Several files are concatenated in the order given.
    """

    name = "import"

    def __init__(self, sources: Sequence[Path], **kwargs):
        super().__init__(**kwargs)
        self.sources = [Path(s) for s in sources]
        self._features = None

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            bags = import_external_features(self.sources)
            if not bags:
                raise EmptyInputError(f"No bags in {[str(s) for s in self.sources]}")
            self._features = np.stack([b.vectors for b in bags])
            logger.info(f"[{self.name}] Loaded {self._features.shape} from {len(self.sources)} file(s)")
        return self._features

    def validate(self, manifest: DatasetManifest) -> None:
        expected = len(self.records(manifest, manifest.entries))
        n_bags, segments, _ = self.features.shape
        if n_bags != expected:
            raise ConfigError(
                f"Imported files hold {n_bags} bags but the manifest describes {expected}"
            )
        if segments != self.bag_len // self.seg_len:
            raise ConfigError(
                f"Imported bags have {segments} segments, expected {self.bag_len // self.seg_len}"
            )

    def extract_split(self, manifest: DatasetManifest, split: str) -> tuple[np.ndarray, list[BagRecord]]:
        records = self.records(manifest, manifest.entries)
        selected = [i for i, r in enumerate(records) if r.split == split]
        return self.features[selected], [records[i] for i in selected]
