"""
Column-wise standardisation of segment descriptors.

The scaler is fitted on the segments of the training split and then applied
to every split, so validation and test bags never contribute statistics.
Each column becomes (x - mean) / (std * sqrt(dim)): zero-centred, with an
average training segment at unit Euclidean norm.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.errors import EmptyInputError, FormatError, ShapeError

logger = logging.getLogger(__name__)

SCALER_FILE = "scaler.json"


@dataclass
class FeatureScaler:
    mean: np.ndarray  # (dim,)
    scale: np.ndarray  # (dim,), strictly positive

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        """Statistics over every segment of a (n_bags, segments, dim) array."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3:
            raise ShapeError(f"Expected (bags, segments, dim) features, got shape {features.shape}")
        rows = features.reshape(-1, features.shape[-1])
        if rows.shape[0] == 0:
            raise EmptyInputError("Cannot fit a feature scaler on zero segments")

        std = rows.std(axis=0)
        # constant columns only need centring
        std[std == 0.0] = 1.0
        scaler = cls(rows.mean(axis=0), std * np.sqrt(rows.shape[1]))
        logger.info(f"Fitted feature scaler on {rows.shape[0]} segments x {rows.shape[1]} dims")
        return scaler

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.dim:
            raise ShapeError(f"Scaler expects {self.dim}-dim features, got shape {features.shape}")
        return (features - self.mean) / self.scale

    def save(self, path: Path) -> None:
        data = {"mean": self.mean.tolist(), "scale": self.scale.tolist()}
        Path(path).write_text(json.dumps(data), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "FeatureScaler":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"Scaler file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            mean = np.asarray(data["mean"], dtype=np.float64)
            scale = np.asarray(data["scale"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}: not a scaler file ({e})") from e
        if mean.ndim != 1 or mean.shape != scale.shape or not np.all(scale > 0):
            raise FormatError(f"{path}: mean and scale must be equal-length vectors with scale > 0")
        return cls(mean, scale)
