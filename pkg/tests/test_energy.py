import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.energy import EnergyConfig, energy_score_table, frame_score, patch_energy, prepare_frames, video_frame_scores
from src.errors import ConfigError, DataError, ShapeError
from src.evaluation import recall_at_fpr, tune_on_table
from src.rng import SplitMix64


def noise_frames(n: int, size: int = 64, seed: int = 0) -> np.ndarray:
    return (SplitMix64(seed).random_array((n, size, size, 3)) * 255).astype(np.uint8)


def small_config(**overrides) -> EnergyConfig:
    options = dict(patch=16, k=3, window=3, crop=64, frame_size=64)
    options.update(overrides)
    return EnergyConfig(**options)


class TestPatchEnergy:
    def test_uniform_patches_have_zero_energy(self):
        frame = np.zeros((64, 64, 3), dtype=np.uint8)
        frame[:32] = (0, 255, 0)
        frame[32:] = (17, 40, 200)
        assert_array_equal(patch_energy(frame, 16), np.zeros((4, 4)))

    def test_single_pixel_oracle(self):
        frame = np.zeros((32, 32, 3))
        frame[5, 7, 1] = 10.0
        grid = patch_energy(frame, 16)
        n = 16 * 16
        # one channel deviates by 10 - 10/n at the pixel and -10/n elsewhere
        expected = math.sqrt((10 - 10 / n) ** 2 + (n - 1) * (10 / n) ** 2)
        assert grid[0, 0] == pytest.approx(expected, rel=1e-12)
        assert np.count_nonzero(grid) == 1

    def test_constant_offset_invariance(self):
        frame = SplitMix64(1).uniform_array(0, 100, (32, 32, 3))
        assert_allclose(patch_energy(frame + 55.0, 8), patch_energy(frame, 8), rtol=1e-12)

    def test_stack_matches_frames(self):
        frames = noise_frames(3, 32)
        grids = patch_energy(frames, 8)
        assert grids.shape == (3, 4, 4)
        for frame, grid in zip(frames, grids):
            assert_array_equal(patch_energy(frame, 8), grid)

    def test_patch_permutation_moves_energies(self):
        frame = noise_frames(1, 64, seed=4)[0]
        tiles = frame.reshape(4, 16, 4, 16, 3).transpose(0, 2, 1, 3, 4).reshape(16, 16, 16, 3)
        order = SplitMix64(5).permutation(16)
        shuffled = tiles[order].reshape(4, 4, 16, 16, 3).transpose(0, 2, 1, 3, 4).reshape(64, 64, 3)
        assert_allclose(patch_energy(shuffled, 16).ravel(), patch_energy(frame, 16).ravel()[order],
                        rtol=1e-12)

    def test_indivisible(self):
        with pytest.raises(ShapeError):
            patch_energy(np.zeros((30, 32, 3)), 16)


class TestFrameScore:
    def test_blackout_scores_zero(self):
        history = noise_frames(3)
        assert frame_score(np.zeros((64, 64, 3)), small_config(), history) == 0.0
        assert frame_score(np.zeros((64, 64, 3)), small_config(normalize=True), history) == 0.0

    def test_green_flash_scores_zero(self):
        frame = np.zeros((64, 64, 3), dtype=np.uint8)
        frame[..., 1] = 255
        assert frame_score(frame, small_config()) == 0.0

    def test_mean_of_k_lowest(self):
        frame = noise_frames(1)[0]
        grid = np.sort(patch_energy(frame, 16).ravel())
        assert frame_score(frame, small_config(k=3)) == pytest.approx(grid[:3].mean(), rel=1e-12)

    def test_static_video_normalizes_to_one(self):
        frames = np.repeat(noise_frames(1), 4, axis=0)
        score = frame_score(frames[3], small_config(normalize=True), frames[:3])
        assert score == pytest.approx(1.0, abs=1e-12)

    def test_flat_history_ratio_guard(self):
        history = np.zeros((3, 64, 64, 3))
        score = frame_score(noise_frames(1)[0], small_config(normalize=True), history)
        assert score == 1.0

    def test_insufficient_history(self):
        with pytest.raises(DataError):
            frame_score(noise_frames(1)[0], small_config(normalize=True), noise_frames(2))


class TestVideoScores:
    def test_matches_frame_score(self):
        video = noise_frames(10, seed=4)
        for normalize in (False, True):
            config = small_config(normalize=normalize)
            scores = video_frame_scores(video, config)
            start = config.window if normalize else 0
            assert np.all(np.isnan(scores[:start]))
            for i in range(start, len(video)):
                expected = frame_score(video[i], config, video[:i] if normalize else None)
                assert scores[i] == pytest.approx(expected, rel=1e-12)

    def test_prepare_frames_crops_centre(self):
        video = noise_frames(2, 64)
        cropped = prepare_frames(video, small_config(crop=32))
        assert cropped.shape == (2, 32, 32, 3)
        assert_array_equal(cropped, video[:, 16:48, 16:48])

    @pytest.mark.parametrize("options", [
        {"patch": 24},
        {"crop": 128},
        {"k": 0},
        {"k": 17},
        {"window": 0},
    ])
    def test_invalid_config(self, options):
        with pytest.raises(ConfigError):
            small_config(**options).validate()


class TestEnergyScoreTable:
    @pytest.mark.parametrize("normalize", [False, True])
    def test_blackout_bags_detected_at_zero_fpr(self, tiny_dataset, normalize):
        config = EnergyConfig(patch=8, k=2, window=3, normalize=normalize, crop=32, frame_size=32)
        table = energy_score_table(tiny_dataset, "test", config, bag_len=32)
        assert len(table) == 4
        assert [r.corrupted for r in table.rows] == [True, False, False, False]
        assert table.rows[0].kinds == ["SuddenBlackout"]
        # negated scores: blacked-out frames give the maximum 0
        assert table.rows[0].score == 0.0
        threshold = tune_on_table(table, 0.0)
        assert recall_at_fpr(table, threshold.threshold).recall == 1.0

    def test_normalized_first_bag_drops_warmup_frames(self, tiny_dataset):
        config = EnergyConfig(patch=8, k=2, window=3, normalize=True, crop=32, frame_size=32)
        table = energy_score_table(tiny_dataset, "train", config, bag_len=32)
        assert len(table.rows[0].segment_scores) == 29
        assert len(table.rows[1].segment_scores) == 32
