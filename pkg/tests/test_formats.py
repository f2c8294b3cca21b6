import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.corruptions import CorruptionEvent, CorruptionKind
from src.errors import FormatError, TruncatedFileError
from src.formats import (
    BagIndex,
    BagRecord,
    DatasetManifest,
    ManifestEntry,
    load_checkpoint,
    load_features,
    save_checkpoint,
    save_features,
)
from src.model import MilModel
from src.rng import SplitMix64


class TestFeatureFiles:
    def test_round_trip_is_exact_for_float32_values(self, tmp_path):
        features = SplitMix64(3).random_array((2, 32, 50)).astype(np.float32)
        save_features(tmp_path / "f.wmil", features)
        loaded = load_features(tmp_path / "f.wmil")
        assert loaded.dtype == np.float64
        assert_array_equal(loaded, features.astype(np.float64))

    def test_payload_size(self, tmp_path):
        save_features(tmp_path / "f.wmil", np.zeros((2, 32, 4096)))
        assert (tmp_path / "f.wmil").stat().st_size == 20 + 2 * 32 * 4096 * 4

    def test_header_fields(self, tmp_path):
        save_features(tmp_path / "f.wmil", np.zeros((3, 4, 5)))
        magic, version, n, s, d = struct.unpack("<4sIIII", (tmp_path / "f.wmil").read_bytes()[:20])
        assert (magic, version, n, s, d) == (b"WMIL", 1, 3, 4, 5)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "f.wmil"
        save_features(path, np.zeros((1, 2, 3)))
        path.write_bytes(b"XMIL" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_features(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "f.wmil"
        save_features(path, np.zeros((1, 2, 3)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(TruncatedFileError):
            load_features(path)

    @pytest.mark.parametrize("offset", range(20))
    def test_any_mutated_header_byte_is_rejected(self, tmp_path, offset):
        path = tmp_path / "f.wmil"
        save_features(path, np.ones((2, 3, 4)))
        raw = bytearray(path.read_bytes())
        raw[offset] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises((FormatError, TruncatedFileError)):
            load_features(path)


class TestCheckpoints:
    @pytest.mark.parametrize("attention_dim", [0, 3])
    def test_round_trip(self, tmp_path, attention_dim):
        model = MilModel.initialize([7, 5, 4, 1], SplitMix64(1), attention_dim)
        save_checkpoint(tmp_path / "m.wmck", model)
        loaded = load_checkpoint(tmp_path / "m.wmck")
        assert loaded.kind == model.kind
        for a, b in zip(loaded.parameters(), model.parameters()):
            assert_array_equal(a, b)

    def test_layout(self, tmp_path):
        model = MilModel.initialize([3, 2, 2, 1], SplitMix64(1))
        save_checkpoint(tmp_path / "m.wmck", model)
        raw = (tmp_path / "m.wmck").read_bytes()
        assert raw[:4] == b"WMCK"
        assert struct.unpack_from("<IIIIIII", raw, 4) == (1, 3, 3, 2, 2, 1, 0)
        w1 = np.frombuffer(raw, dtype="<f8", count=6, offset=32).reshape(2, 3)
        assert_array_equal(w1, model.head.weights[0])
        n_params = 6 + 2 + 4 + 2 + 2 + 1
        assert len(raw) == 32 + 8 * n_params

    def test_size_mismatch(self, tmp_path):
        model = MilModel.initialize([3, 2, 2, 1], SplitMix64(1))
        path = tmp_path / "m.wmck"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes() + b"\0" * 8)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_missing(self, tmp_path):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "nope.wmck")


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [
            ManifestEntry("a.wmvd", 1, "train", [CorruptionEvent(CorruptionKind.FLICKER, 3, 16, {"gain": 1.5})]),
            ManifestEntry("b.wmvd", 0, "test", []),
            ManifestEntry("frames/c", 1, "validation", None),
        ]
        DatasetManifest(entries).save(tmp_path / "manifest.json")
        loaded = DatasetManifest.load(tmp_path / "manifest.json")
        assert loaded.entries == entries
        assert loaded.root == tmp_path

    def test_duplicate_paths(self, tmp_path):
        manifest = DatasetManifest([ManifestEntry("a", 0, "train"), ManifestEntry("a", 1, "train")])
        with pytest.raises(FormatError):
            manifest.validate()

    def test_bad_split(self):
        with pytest.raises(FormatError):
            DatasetManifest([ManifestEntry("a", 0, "holdout")]).validate()

    def test_malformed_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{\"videos\": [{\"label\": 1}]}")
        with pytest.raises(FormatError):
            DatasetManifest.load(tmp_path / "manifest.json")

    def test_kinds_in_range(self):
        entry = ManifestEntry("a", 1, "train", [
            CorruptionEvent(CorruptionKind.LINES, 0, 10),
            CorruptionEvent(CorruptionKind.GREEN_FLASH, 600, 2),
        ])
        assert entry.kinds(0, 512) == ["Lines"]
        assert entry.kinds(512, 1024) == ["GreenFlash"]
        assert ManifestEntry("b", 1, "train").kinds(0, 512) is None


class TestBagIndex:
    def test_round_trip(self, tmp_path):
        index = BagIndex(512, 16, {
            "train": [BagRecord("a#0", "a", 0, 1, "train", ["Flicker"]),
                      BagRecord("b#0", "b", 0, 0, "train", [])],
            "test": [BagRecord("c#1", "c", 512, 1, "test", None)],
        })
        index.save(tmp_path / "bags.json")
        assert BagIndex.load(tmp_path / "bags.json") == index

    def test_truth_overrides_weak_label(self):
        assert BagRecord("a", "a", 0, 1, "train", []).corrupted is False
        assert BagRecord("a", "a", 0, 0, "train", ["Lines"]).corrupted is True
        assert BagRecord("a", "a", 0, 1, "train", None).corrupted is True
