"""Frames, segments and bags, plus the raw video container.

A frame is a ``(height, width, 3)`` uint8 RGB array and a video is a
``(n_frames, height, width, 3)`` uint8 array. Segments and bags are views
into the video, never copies.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from src.config import BAG_LENGTH, FRAME_SIZE, SEGMENT_LENGTH
from src.errors import ConfigError, EmptyInputError, FormatError, ShapeError, TruncatedFileError

logger = logging.getLogger(__name__)

VIDEO_MAGIC = b"WMVD"
VIDEO_VERSION = 1
_VIDEO_HEADER = struct.Struct("<4sIIIII")

FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class Bag:
    """A contiguous stretch of bag_len frames split into equal segments."""
    segments: np.ndarray  # (n_segments, seg_len, h, w, 3) uint8
    source_id: str
    start_frame: int

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def segment_length(self) -> int:
        return self.segments.shape[1]

    @property
    def n_frames(self) -> int:
        return self.n_segments * self.segment_length

    @property
    def frames(self) -> np.ndarray:
        """All frames of the bag in source order."""
        return self.segments.reshape(self.n_frames, *self.segments.shape[2:])


def check_video(video: np.ndarray) -> None:
    """Validate a video array's layout."""
    if video.ndim != 4 or video.shape[-1] != 3:
        raise ShapeError(f"Expected (n_frames, h, w, 3) video, got shape {video.shape}")
    if video.dtype != np.uint8:
        raise ShapeError(f"Expected uint8 samples, got {video.dtype}")


def make_bags(
    video: np.ndarray,
    bag_len: int = BAG_LENGTH,
    seg_len: int = SEGMENT_LENGTH,
    source_id: str = "",
) -> list[Bag]:
    """Split a video into consecutive, non-overlapping bags.

    Trailing frames that do not fill a whole bag are dropped.
    """
    if seg_len <= 0 or bag_len <= 0 or bag_len % seg_len:
        raise ConfigError(f"Segment length {seg_len} must divide bag length {bag_len}")
    if len(video) == 0:
        raise EmptyInputError(f"Video {source_id or '<memory>'} has no frames")
    check_video(video)

    n_bags = len(video) // bag_len
    per_bag = bag_len // seg_len
    bags = []
    for b in range(n_bags):
        start = b * bag_len
        chunk = video[start:start + bag_len]
        bags.append(Bag(
            segments=chunk.reshape(per_bag, seg_len, *video.shape[1:]),
            source_id=source_id,
            start_frame=start,
        ))

    dropped = len(video) - n_bags * bag_len
    if dropped:
        logger.debug(f"{source_id or '<memory>'}: dropped {dropped} trailing frames")
    return bags


def _box_bounds(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Source index range [start, end) feeding each output index."""
    i = np.arange(n_out, dtype=np.int64)
    starts = (i * n_in) // n_out
    ends = np.maximum(starts + 1, -((-(i + 1) * n_in) // n_out))
    return starts, ends


def _box_sum(a: np.ndarray, axis: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Sum ``a`` over the source box of every output index along ``axis``."""
    starts, ends = _box_bounds(a.shape[axis], n_out)
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 0)
    c = np.pad(np.cumsum(a, axis=axis), pad)
    sums = np.take(c, ends, axis=axis) - np.take(c, starts, axis=axis)
    return sums, ends - starts


def area_average(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Float64 area-average resample of the ``(h, w, c)`` axes ending at -3, -2."""
    rows, row_counts = _box_sum(a.astype(np.float64), a.ndim - 3, out_h)
    sums, col_counts = _box_sum(rows, a.ndim - 2, out_w)
    counts = np.outer(row_counts, col_counts).astype(np.float64)[:, :, None]
    return sums / counts


def resize_frame(frame: np.ndarray, out_h: int = FRAME_SIZE, out_w: int = FRAME_SIZE) -> np.ndarray:
    """Area-average resize of a frame (or a stack of frames) to out_h x out_w.

    Each output sample is the mean of its source box, rounded half up.
    """
    if frame.ndim < 3 or frame.shape[-3] == 0 or frame.shape[-2] == 0:
        raise EmptyInputError(f"Cannot resize frame of shape {frame.shape}")
    if frame.shape[-3:-1] == (out_h, out_w):
        return frame.copy()

    rows, row_counts = _box_sum(frame.astype(np.int64), frame.ndim - 3, out_h)
    sums, col_counts = _box_sum(rows, frame.ndim - 2, out_w)
    counts = np.outer(row_counts, col_counts)[:, :, None]
    # round half up in integer arithmetic: floor((2*sum + n) / 2n)
    return ((2 * sums + counts) // (2 * counts)).astype(np.uint8)


def resize_video(video: np.ndarray, size: int = FRAME_SIZE) -> np.ndarray:
    if len(video) == 0:
        raise EmptyInputError("Cannot resize an empty video")
    return resize_frame(video, size, size)


def write_video(path: Path, video: np.ndarray) -> None:
    """Write a video in the raw WMVD container."""
    check_video(video)
    n, h, w, c = video.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_VIDEO_HEADER.pack(VIDEO_MAGIC, VIDEO_VERSION, n, h, w, c))
        f.write(np.ascontiguousarray(video).tobytes())


def read_video_header(path: Path) -> tuple[int, int, int]:
    """Return (n_frames, height, width) of a video without reading samples."""
    path = Path(path)
    if path.is_dir():
        frames = _frame_files(path)
        if not frames:
            return 0, 0, 0
        with Image.open(frames[0]) as img:
            return len(frames), img.height, img.width

    with open(path, "rb") as f:
        raw = f.read(_VIDEO_HEADER.size)
    return _parse_video_header(raw, path)[:3]


def _parse_video_header(raw: bytes, path: Path) -> tuple[int, int, int]:
    if len(raw) < _VIDEO_HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    magic, version, n, h, w, c = _VIDEO_HEADER.unpack(raw[:_VIDEO_HEADER.size])
    if magic != VIDEO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VIDEO_VERSION:
        raise FormatError(f"{path}: unsupported video version {version}")
    if c != 3:
        raise FormatError(f"{path}: expected 3 channels, header says {c}")
    return n, h, w


def read_video(path: Path) -> np.ndarray:
    """Read a WMVD container or a directory of frame images."""
    path = Path(path)
    if path.is_dir():
        return read_frame_directory(path)
    if not path.is_file():
        raise FormatError(f"Video not found: {path}")

    raw = path.read_bytes()
    n, h, w = _parse_video_header(raw, path)
    expected = _VIDEO_HEADER.size + n * h * w * 3
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} unexpected trailing bytes")

    data = np.frombuffer(raw, dtype=np.uint8, offset=_VIDEO_HEADER.size)
    return data.reshape(n, h, w, 3)


def _frame_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_EXTENSIONS)


def read_frame_directory(directory: Path) -> np.ndarray:
    """Read an ordered directory of image files as a video."""
    files = _frame_files(directory)
    if not files:
        raise EmptyInputError(f"No frame images in {directory}")

    frames = []
    for file in files:
        with Image.open(file) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))

    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ShapeError(f"{directory}: frames have differing sizes {sorted(shapes)}")
    return np.stack(frames)
