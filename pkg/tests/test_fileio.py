"""Binary format round trips and the documented error kinds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xplore.cluster import ClusteringOptions, kmeans_fit
from xplore.data import FeatureMatrix, ImageSet
from xplore.fileio import (BadMagicError, NonFiniteValueError, TruncatedFileError,
                           read_checkpoint, read_cluster_model, read_features,
                           read_images, write_checkpoint, write_cluster_model,
                           write_features, write_images)


@pytest.fixture
def tmpfile(tmp_path):
    return tmp_path / "artifact.bin"


class TestFeatures:
    def test_round_trip_bit_identical(self, tmpfile):
        m = FeatureMatrix(np.array([[1.0, 2.5, -3.0], [0.125, 4.0, 5.5]]),
                          normalized=False)
        write_features(tmpfile, m)
        back = read_features(tmpfile)
        assert np.array_equal(back.values, m.values)
        assert back.normalized == m.normalized

    def test_write_read_write_same_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        m = FeatureMatrix(rng.normal(size=(4, 3)))
        write_features(tmp_path / "a", m)
        write_features(tmp_path / "b", read_features(tmp_path / "a"))
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_bad_magic(self, tmpfile):
        tmpfile.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(BadMagicError, match="magic"):
            read_features(tmpfile)

    def test_truncated_payload(self, tmpfile):
        import struct
        # header says 5x4 but only 3 rows follow
        blob = b"XFV1" + struct.pack("<IIB", 5, 4, 0) + b"\x00" * (3 * 4 * 4)
        tmpfile.write_bytes(blob)
        with pytest.raises(TruncatedFileError, match="truncated"):
            read_features(tmpfile)

    def test_non_finite_rejected(self, tmpfile):
        m = FeatureMatrix(np.array([[np.inf, 0.0]]))
        with pytest.raises(NonFiniteValueError):
            write_features(tmpfile, m)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6), st.integers(1, 6))
    def test_round_trip_random(self, seed, n, d):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(n, d)).astype(np.float32).astype(np.float64)
        import tempfile, os
        fd, path = tempfile.mkstemp()
        os.close(fd)
        try:
            write_features(path, FeatureMatrix(values, normalized=True))
            back = read_features(path)
            assert np.array_equal(back.values, values)
            assert back.normalized
        finally:
            os.unlink(path)


class TestFeatureIoEntryPoint:
    def test_mode_dispatch(self, tmpfile):
        from xplore.fileio import feature_io
        m = FeatureMatrix(np.array([[1.0, 2.0]]))
        assert feature_io(tmpfile, "write", m) is None
        back = feature_io(tmpfile, "read")
        assert np.array_equal(back.values, m.values)
        with pytest.raises(ValueError, match="unknown mode"):
            feature_io(tmpfile, "append")
        with pytest.raises(ValueError, match="needs a feature matrix"):
            feature_io(tmpfile, "write")


class TestImages:
    def test_round_trip_with_labels(self, tmpfile):
        rng = np.random.default_rng(1)
        imgs = ImageSet(np.clip(rng.normal(size=(3, 3, 8, 8)), -1, 1).astype(np.float32),
                        truth_labels=np.array([0, 2, 1]))
        write_images(tmpfile, imgs)
        back = read_images(tmpfile)
        assert np.array_equal(back.pixels, imgs.pixels)
        assert np.array_equal(back.truth_labels, imgs.truth_labels)

    def test_round_trip_without_labels(self, tmpfile):
        imgs = ImageSet(np.zeros((2, 3, 4, 4), dtype=np.float32))
        write_images(tmpfile, imgs)
        assert read_images(tmpfile).truth_labels is None

    def test_bad_magic(self, tmpfile):
        tmpfile.write_bytes(b"ABCD" + b"\x00" * 32)
        with pytest.raises(BadMagicError):
            read_images(tmpfile)

    def test_truncated(self, tmpfile):
        import struct
        tmpfile.write_bytes(b"XIM1" + struct.pack("<IIII", 2, 3, 8, 8) + b"\x00" * 10)
        with pytest.raises(TruncatedFileError):
            read_images(tmpfile)


class TestClusterModel:
    def test_round_trip(self, tmpfile):
        rng = np.random.default_rng(2)
        model = kmeans_fit(rng.normal(size=(10, 3)), 2,
                           ClusteringOptions(restarts=3, seed=0))
        write_cluster_model(tmpfile, model)
        back = read_cluster_model(tmpfile)
        assert back.k == 2
        assert np.array_equal(back.assignments, model.assignments)
        assert back.inertia == model.inertia  # stored as f64
        assert np.array_equal(back.centroids,
                              model.centroids.astype(np.float32).astype(np.float64))

    def test_write_read_write_same_bytes(self, tmp_path):
        rng = np.random.default_rng(3)
        model = kmeans_fit(rng.normal(size=(8, 2)), 3,
                           ClusteringOptions(restarts=2, seed=1))
        write_cluster_model(tmp_path / "a", model)
        write_cluster_model(tmp_path / "b", read_cluster_model(tmp_path / "a"))
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_bad_magic(self, tmpfile):
        tmpfile.write_bytes(b"XCM2" + b"\x00" * 20)
        with pytest.raises(BadMagicError):
            read_cluster_model(tmpfile)

    def test_truncated(self, tmpfile):
        import struct
        tmpfile.write_bytes(b"XCM1" + struct.pack("<II", 4, 8))
        with pytest.raises(TruncatedFileError):
            read_cluster_model(tmpfile)


class TestCheckpointTable:
    def test_round_trip(self, tmpfile):
        rng = np.random.default_rng(4)
        header = {"config_hash": "ab" * 32, "step": 7, "rng": {"state": 123}}
        tensors = {"g.w": rng.normal(size=(2, 3)).astype(np.float32),
                   "d.b": np.zeros(4, dtype=np.float32),
                   "scalarish": np.float32(2.5) * np.ones((), dtype=np.float32)}
        write_checkpoint(tmpfile, header, tensors)
        h2, t2 = read_checkpoint(tmpfile)
        assert h2 == header
        assert set(t2) == set(tensors)
        for name in tensors:
            assert np.array_equal(t2[name], np.asarray(tensors[name], dtype=np.float32))

    def test_truncated(self, tmpfile):
        import struct
        tmpfile.write_bytes(b"XCK1" + struct.pack("<I", 100) + b"{}")
        with pytest.raises(TruncatedFileError):
            read_checkpoint(tmpfile)

    def test_bad_magic(self, tmpfile):
        tmpfile.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(BadMagicError):
            read_checkpoint(tmpfile)
