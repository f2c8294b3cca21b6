import numpy as np
import pytest

from src.corruptions import CorruptionEvent, CorruptionKind
from src.formats import DatasetManifest, ManifestEntry
from src.model import MilModel
from src.rng import SplitMix64
from src.synth import GeneratorConfig, Motion, SceneSpec, render_base_video
from src.video import write_video


@pytest.fixture
def rng():
    return SplitMix64(1234)


@pytest.fixture
def small_model(rng):
    """Deep MIL model with a 6 -> 5 -> 4 -> 1 head."""
    return MilModel.initialize([6, 5, 4, 1], rng)


@pytest.fixture
def small_attention_model(rng):
    """Attention model with a 6 -> 5 -> 4 -> 1 head and L = 3."""
    return MilModel.initialize([6, 5, 4, 1], rng, attention_dim=3)


@pytest.fixture
def tiny_video():
    """40 frames of 32x32 moving gradient."""
    return render_base_video(SceneSpec((32, 32), Motion.GRADIENT, 5), 40, seed=11)


@pytest.fixture
def tiny_dataset(tmp_path):
    """Two-split manifest of 64-frame 32x32 videos, written to disk."""
    entries = []
    for i, (label, split) in enumerate([(1, "train"), (0, "train"), (1, "test"), (0, "test")]):
        video = render_base_video(SceneSpec((32, 32), Motion.RECTANGLES, i), 64, seed=i)
        events = []
        if label:
            events = [CorruptionEvent(CorruptionKind.SUDDEN_BLACKOUT, 20, 10)]
            video = video.copy()
            video[20:30] = 0
        rel = f"videos/{i:05d}.wmvd"
        write_video(tmp_path / rel, video)
        entries.append(ManifestEntry(rel, label, split, events))
    manifest = DatasetManifest(entries, root=tmp_path)
    manifest.save(tmp_path / "manifest.json")
    return manifest


@pytest.fixture
def small_generator_config():
    return GeneratorConfig(
        n_corrupted=2,
        n_normal=2,
        frames_per_video=32,
        resolution=(32, 32),
        seed=3,
    )


def random_bags(rng: SplitMix64, n_bags: int, n_segments: int, dim: int) -> np.ndarray:
    return rng.uniform_array(-1.0, 1.0, (n_bags, n_segments, dim))
