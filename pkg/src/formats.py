"""
On-disk formats: dataset manifest, bag index, feature files, checkpoints.

Binary files are little-endian and begin with a 4-byte magic and a u32
version. Loaders require the file size to match the header exactly.

WMIL feature file::

    "WMIL" u32 version u32 n_bags u32 segs_per_bag u32 dim
    float32[n_bags][segs_per_bag][dim]

WMCK checkpoint::

    "WMCK" u32 version u32 n_layers u32 widths[n_layers + 1] u32 attention_dim
    float64 W1 (row-major out x in), b1, W2, b2, ..., [V (L x M), w (L)]
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from src.corruptions import CorruptionEvent
from src.errors import ConfigError, FormatError, TruncatedFileError
from src.model import AttentionHead, FcHead, MilModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FEATURE_MAGIC = b"WMIL"
CHECKPOINT_MAGIC = b"WMCK"

_FEATURE_HEADER = struct.Struct("<4sIIII")
_CHECKPOINT_HEADER = struct.Struct("<4sII")

SPLITS = ("train", "validation", "test")


@dataclass
class ManifestEntry:
    """One video of a dataset; events is None when ground truth is unknown."""
    path: str
    label: int
    split: str
    events: Optional[list[CorruptionEvent]] = None

    def kinds(self, start: int = 0, stop: Optional[int] = None) -> Optional[list[str]]:
        """Sorted corruption kinds touching frames [start, stop)."""
        if self.events is None:
            return None
        stop = stop if stop is not None else max((e.end_frame for e in self.events), default=0)
        return sorted({e.kind.value for e in self.events if e.overlaps(start, stop)})


@dataclass
class DatasetManifest:
    """Index of a video corpus; relative paths resolve against root."""
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def validate(self) -> None:
        seen = set()
        for entry in self.entries:
            if entry.path in seen:
                raise FormatError(f"Duplicate manifest path: {entry.path}")
            seen.add(entry.path)
            if entry.label not in (0, 1):
                raise FormatError(f"{entry.path}: label must be 0 or 1, got {entry.label}")
            if entry.split not in SPLITS:
                raise FormatError(f"{entry.path}: unknown split {entry.split!r}")

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "videos": [
                {
                    "path": e.path,
                    "label": e.label,
                    "split": e.split,
                    "events": None if e.events is None else [ev.to_dict() for ev in e.events],
                }
                for e in self.entries
            ],
        }

    def save(self, path: Path) -> None:
        self.validate()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"Manifest not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            entries = [
                ManifestEntry(
                    path=v["path"],
                    label=int(v["label"]),
                    split=v.get("split", "train"),
                    events=None if v.get("events") is None
                    else [CorruptionEvent.from_dict(ev) for ev in v["events"]],
                )
                for v in data["videos"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Malformed manifest {path}: {e}") from e

        manifest = cls(entries, root=path.parent)
        manifest.validate()
        return manifest


@dataclass
class BagRecord:
    """Metadata of one feature bag, parallel to the rows of a WMIL file."""
    bag_id: str
    source: str
    start_frame: int
    label: int
    split: str
    kinds: Optional[list[str]] = None

    @property
    def corrupted(self) -> bool:
        """Ground truth when known, otherwise the weak label."""
        if self.kinds is None:
            return bool(self.label)
        return bool(self.kinds)


@dataclass
class BagIndex:
    bag_length: int
    segment_length: int
    splits: dict[str, list[BagRecord]] = field(default_factory=dict)

    def save(self, path: Path) -> None:
        data = {
            "version": FORMAT_VERSION,
            "bag_length": self.bag_length,
            "segment_length": self.segment_length,
            "splits": {
                split: [
                    {
                        "bag_id": r.bag_id,
                        "source": r.source,
                        "start_frame": r.start_frame,
                        "label": r.label,
                        "kinds": r.kinds,
                    }
                    for r in records
                ]
                for split, records in self.splits.items()
            },
        }
        Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "BagIndex":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"Bag index not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("version") != FORMAT_VERSION:
                raise FormatError(f"{path}: unsupported bag index version {data.get('version')}")
            splits = {
                split: [
                    BagRecord(r["bag_id"], r["source"], int(r["start_frame"]), int(r["label"]),
                              split, r.get("kinds"))
                    for r in records
                ]
                for split, records in data["splits"].items()
            }
            return cls(int(data["bag_length"]), int(data["segment_length"]), splits)
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"Malformed bag index {path}: {e}") from e


def save_features(path: Path, features: np.ndarray) -> None:
    """Write an (n_bags, segs_per_bag, dim) array as a WMIL file."""
    features = np.asarray(features)
    if features.ndim != 3:
        raise ConfigError(f"Features must be (n_bags, segments, dim), got {features.shape}")
    n_bags, segs, dim = features.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n_bags, segs, dim))
        f.write(features.astype("<f4").tobytes())
    logger.debug(f"Wrote {n_bags}x{segs}x{dim} features to {path}")


def _read_exact(path: Path, header: struct.Struct, magic: bytes) -> tuple[bytes, tuple]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"File not found: {path}")
    raw = path.read_bytes()
    if len(raw) < header.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(raw)} bytes)")
    fields = header.unpack_from(raw)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fields[1]}")
    return raw, fields


def _check_size(path: Path, actual: int, expected: int) -> None:
    if actual < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {actual}")
    if actual > expected:
        raise FormatError(f"{path}: {actual - expected} unexpected trailing bytes")


def load_features(path: Path) -> np.ndarray:
    """Read a WMIL file as a float64 (n_bags, segs_per_bag, dim) array."""
    raw, (_, _, n_bags, segs, dim) = _read_exact(path, _FEATURE_HEADER, FEATURE_MAGIC)
    _check_size(path, len(raw), _FEATURE_HEADER.size + n_bags * segs * dim * 4)
    values = np.frombuffer(raw, dtype="<f4", offset=_FEATURE_HEADER.size)
    return values.astype(np.float64).reshape(n_bags, segs, dim)


def save_checkpoint(path: Path, model: MilModel) -> None:
    """Write model parameters as a WMCK file."""
    dims = model.head.dims
    att_dim = model.attention.dim if model.attention is not None else 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(dims) - 1))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<I", att_dim))
        for p in model.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path: Path) -> MilModel:
    """Read a WMCK file back into a model."""
    raw, (_, _, n_layers) = _read_exact(path, _CHECKPOINT_HEADER, CHECKPOINT_MAGIC)
    offset = _CHECKPOINT_HEADER.size
    table_size = 4 * (n_layers + 2)
    if n_layers < 2 or len(raw) < offset + table_size:
        raise TruncatedFileError(f"{path}: layer table truncated or invalid ({n_layers} layers)")
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", raw, offset))
    att_dim = struct.unpack_from("<I", raw, offset + 4 * (n_layers + 1))[0]
    offset += table_size
    if dims[-1] != 1 or min(dims) == 0:
        raise FormatError(f"{path}: invalid layer widths {dims}")

    shapes = []
    for i, o in zip(dims[:-1], dims[1:]):
        shapes.extend([(o, i), (o,)])
    if att_dim:
        shapes.extend([(att_dim, dims[-2]), (att_dim,)])
    n_values = sum(int(np.prod(s)) for s in shapes)
    _check_size(path, len(raw), offset + 8 * n_values)

    values = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64)
    tensors, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(values[pos:pos + size].reshape(shape).copy())
        pos += size

    n_fc = 2 * n_layers
    head = FcHead(weights=tensors[0:n_fc:2], biases=tensors[1:n_fc:2])
    attention = AttentionHead(tensors[n_fc], tensors[n_fc + 1]) if att_dim else None
    return MilModel(head, attention)
