import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src import synth
from src.corruptions import CORRUPTIONS, CorruptionEvent, CorruptionKind, get_corruption
from src.corruptions.overlays import MacroBlockCorruption
from src.errors import ConfigError, RangeError
from src.features import extract_segment_features
from src.formats import DatasetManifest
from src.rng import SplitMix64
from src.synth import GeneratorConfig, Motion, SceneSpec, generate_dataset, inject, render_base_video
from src.video import read_video


def event(kind: CorruptionKind, start: int, duration: int, **params) -> CorruptionEvent:
    return CorruptionEvent(kind, start, duration, params)


class TestRenderBaseVideo:
    def test_deterministic(self):
        spec = SceneSpec((32, 48), Motion.BARS, 3)
        assert_array_equal(render_base_video(spec, 10, 1), render_base_video(spec, 10, 1))

    def test_seed_changes_content(self):
        spec = SceneSpec((32, 32), Motion.GRADIENT, 3)
        assert np.any(render_base_video(spec, 4, 1) != render_base_video(spec, 4, 2))

    @pytest.mark.parametrize("motion", list(Motion))
    def test_frames_move(self, motion):
        video = render_base_video(SceneSpec((32, 32), motion, 9), 6, seed=4)
        assert video.dtype == np.uint8
        for a, b in zip(video[:-1], video[1:]):
            assert np.any(a != b)

    @pytest.mark.parametrize("motion", list(Motion))
    def test_chunked_rendering_matches_frame_by_frame(self, motion, monkeypatch):
        spec = SceneSpec((32, 48), motion, 6)
        batched = render_base_video(spec, 70, seed=8)
        monkeypatch.setattr(synth, "RENDER_CHUNK", 1)
        assert_array_equal(render_base_video(spec, 70, seed=8), batched)

    def test_single_frame(self):
        video = render_base_video(SceneSpec((16, 16)), 1, seed=0)
        assert video.shape == (1, 16, 16, 3)

    def test_resolution_too_small(self):
        with pytest.raises(ConfigError):
            render_base_video(SceneSpec((8, 16)), 1, seed=0)


class TestInject:
    def test_green_flash(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.GREEN_FLASH, 10, 2))
        assert np.all(out[10:12] == np.array([0, 255, 0], dtype=np.uint8))
        assert_array_equal(out[9], tiny_video[9])
        assert_array_equal(out[12], tiny_video[12])

    def test_sudden_blackout(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.SUDDEN_BLACKOUT, 5, 3))
        assert np.all(out[5:8] == 0)
        assert np.any(out[4] != 0)

    def test_half_screen(self):
        video = render_base_video(SceneSpec((112, 112), Motion.GRADIENT, 1), 2, seed=1)
        out = inject(video, event(CorruptionKind.HALF_SCREEN, 0, 2))
        assert np.all(out[:, :, :56] == 0)
        assert_array_equal(out[:, :, 56:], video[:, :, 56:])

    def test_half_screen_odd_width(self):
        video = np.full((1, 16, 17, 3), 9, dtype=np.uint8)
        out = inject(video, event(CorruptionKind.HALF_SCREEN, 0, 1))
        assert np.all(out[:, :, :9] == 0)
        assert np.all(out[:, :, 9:] == 9)

    def test_bottom_split_copies_rows_above(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.BOTTOM_SPLIT, 0, 1, fraction=0.25))
        assert_array_equal(out[0, 24:], tiny_video[0, 16:24])
        assert_array_equal(out[0, :24], tiny_video[0, :24])

    def test_bottom_split_half_of_odd_height(self):
        video = render_base_video(SceneSpec((33, 32), Motion.GRADIENT, 1), 1, seed=2)
        out = inject(video, event(CorruptionKind.BOTTOM_SPLIT, 0, 1, fraction=0.5))
        # 16 rows, not ceil(16.5): the copied band must fit above the split
        assert_array_equal(out[0, 17:], video[0, 1:17])
        assert_array_equal(out[0, :17], video[0, :17])

    @pytest.mark.parametrize("fraction", [0.51, 1.0, -0.1])
    def test_bottom_split_fraction_out_of_range(self, tiny_video, fraction):
        with pytest.raises(RangeError):
            inject(tiny_video, event(CorruptionKind.BOTTOM_SPLIT, 0, 1, fraction=fraction))

    def test_lines_rows(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.LINES, 0, 1, spacing=4, axis="rows"))
        assert np.all(out[0, ::4] == 255)
        assert_array_equal(out[0, 1::4], tiny_video[0, 1::4])

    def test_lines_columns(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.LINES, 0, 1, spacing=5, axis="columns"))
        assert np.all(out[0, :, ::5] == 255)

    def test_flicker_alternates_gain(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.FLICKER, 2, 4, gain=1.5))
        expected = np.clip(np.floor(tiny_video[2].astype(np.float64) * 1.5 + 0.5), 0, 255)
        assert_array_equal(out[2], expected.astype(np.uint8))
        assert_array_equal(out[3], tiny_video[3])
        assert_array_equal(out[4], np.clip(np.floor(tiny_video[4] * 1.5 + 0.5), 0, 255).astype(np.uint8))

    def test_display_stride(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.DISPLAY_STRIDE, 0, 1, delta=3))
        for r in (0, 1, 5, 31):
            assert_array_equal(out[0, r], np.roll(tiny_video[0, r], (r * 3) % 32, axis=0))

    def test_color_space_change(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.COLOR_SPACE_CHANGE, 0, 1))
        assert_array_equal(out[0, :, :, 1], tiny_video[0, :, :, 0])
        assert_array_equal(out[0, :, :, 2], tiny_video[0, :, :, 1])
        assert_array_equal(out[0, :, :, 0], tiny_video[0, :, :, 2])

    def test_message_popup(self, tiny_video):
        out = inject(tiny_video, event(CorruptionKind.MESSAGE_POPUP, 0, 1,
                                       top=4, left=6, height=10, width=12))
        assert np.all(out[0, 4, 6:18] == 0)
        assert np.all(out[0, 13, 6:18] == 0)
        assert np.all(out[0, 5:13, 7:17] == 200)
        assert_array_equal(out[0, 14:], tiny_video[0, 14:])

    def test_macro_block_uses_event_seed(self, tiny_video):
        params = {"blocks": 2, "seed": 99}
        out = inject(tiny_video, event(CorruptionKind.MACRO_BLOCK, 0, 2, **params))
        covered = np.zeros((32, 32), dtype=bool)
        for top, left, rgb in MacroBlockCorruption().layout(params, 32, 32):
            assert np.all(out[:2, top:top + 16, left:left + 16] == np.array(rgb, dtype=np.uint8))
            covered[top:top + 16, left:left + 16] = True
        # same blocks on both frames of the event; the moving scene shows elsewhere
        assert_array_equal(out[0][covered], out[1][covered])
        assert_array_equal(out[:2][:, ~covered], tiny_video[:2][:, ~covered])

    @pytest.mark.parametrize("kind", list(CorruptionKind))
    def test_frames_outside_event_untouched(self, tiny_video, kind):
        rng = SplitMix64(17)
        corruption = get_corruption(kind)
        ev = CorruptionEvent(kind, 7, 5, corruption.default_params(rng, 32, 32))
        out = inject(tiny_video, ev)
        assert_array_equal(out[:7], tiny_video[:7])
        assert_array_equal(out[12:], tiny_video[12:])

    @pytest.mark.parametrize("kind", list(CorruptionKind))
    def test_every_kind_changes_builtin_features(self, kind):
        video = render_base_video(SceneSpec((112, 112), Motion.RECTANGLES, 2), 16, seed=6)
        params = get_corruption(kind).default_params(SplitMix64(5), 112, 112)
        out = inject(video, CorruptionEvent(kind, 0, 16, params))
        distance = np.linalg.norm(extract_segment_features(out) - extract_segment_features(video))
        assert distance > 0

    def test_out_of_range(self, tiny_video):
        with pytest.raises(RangeError):
            inject(tiny_video, event(CorruptionKind.GREEN_FLASH, 39, 2))

    def test_does_not_modify_input(self, tiny_video):
        before = tiny_video.copy()
        inject(tiny_video, event(CorruptionKind.SUDDEN_BLACKOUT, 0, 40))
        assert_array_equal(tiny_video, before)


class TestCorruptionRegistry:
    def test_ten_kinds(self):
        assert len(CORRUPTIONS) == 10

    def test_lookup_by_name(self):
        assert get_corruption("GreenFlash").kind is CorruptionKind.GREEN_FLASH

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            get_corruption("Sparkle")

    def test_random_event_within_video(self):
        rng = SplitMix64(2)
        for kind, corruption in CORRUPTIONS.items():
            ev = corruption.random_event(rng, 100, 32, 32)
            assert ev.kind is kind
            assert 0 <= ev.start_frame and ev.end_frame <= 100
            assert ev.duration >= 1

    def test_event_dict_round_trip(self):
        ev = event(CorruptionKind.LINES, 3, 9, spacing=4, axis="rows")
        assert CorruptionEvent.from_dict(json.loads(json.dumps(ev.to_dict()))) == ev


class TestGenerateDataset:
    def test_counts_and_labels(self, tmp_path, small_generator_config):
        manifest = generate_dataset(small_generator_config, tmp_path)
        assert len(manifest.entries) == 4
        assert [e.label for e in manifest.entries] == [1, 1, 0, 0]
        assert all(e.events for e in manifest.entries if e.label == 1)
        assert all(not e.events for e in manifest.entries if e.label == 0)

    def test_sixty_entries(self, tmp_path):
        config = GeneratorConfig(n_corrupted=30, n_normal=30, frames_per_video=2,
                                 resolution=(16, 16), events_per_positive=(1, 1))
        manifest = generate_dataset(config, tmp_path)
        assert len(manifest.entries) == 60

    def test_label_noise_without_events(self, tmp_path, small_generator_config):
        small_generator_config.p_corrupt = 0.0
        manifest = generate_dataset(small_generator_config, tmp_path)
        assert all(not e.events for e in manifest.entries)

    def test_deterministic_bytes(self, tmp_path, small_generator_config):
        generate_dataset(small_generator_config, tmp_path / "a")
        generate_dataset(small_generator_config, tmp_path / "b")
        for name in ("manifest.json", "videos/00000.wmvd", "videos/00003.wmvd"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_round_trip(self, tmp_path, small_generator_config):
        written = generate_dataset(small_generator_config, tmp_path)
        loaded = DatasetManifest.load(tmp_path / "manifest.json")
        assert loaded.entries == written.entries
        video = read_video(loaded.resolve(loaded.entries[0]))
        assert video.shape == (32, 32, 32, 3)

    def test_splits_hold_both_labels(self, tmp_path):
        config = GeneratorConfig(n_corrupted=4, n_normal=4, frames_per_video=2, resolution=(16, 16))
        manifest = generate_dataset(config, tmp_path)
        for split in ("train", "validation", "test"):
            assert {e.label for e in manifest.split(split)} == {0, 1}

    def test_held_out_kinds_only_in_test(self, tmp_path):
        config = GeneratorConfig(
            n_corrupted=8, n_normal=2, frames_per_video=64, resolution=(16, 16),
            train_kinds=["Flicker", "Lines"], test_kinds=["HalfScreen"],
        )
        manifest = generate_dataset(config, tmp_path)
        for entry in manifest.entries:
            kinds = {e.kind.value for e in entry.events}
            if entry.split == "test":
                assert kinds <= {"HalfScreen"}
            else:
                assert kinds <= {"Flicker", "Lines"}

    def test_invalid_probability(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_dataset(GeneratorConfig(p_corrupt=1.5), tmp_path)

    def test_unknown_option(self):
        with pytest.raises(ConfigError):
            GeneratorConfig.from_dict({"n_videos": 3})
