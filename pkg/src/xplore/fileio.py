"""Binary artifact formats shared by the pipeline stages.

All multi-byte integers are little-endian. Four formats:

  XFV1  feature matrix: magic, u32 n, u32 d, u8 normalized, n*d float32
  XIM1  image set: magic, u32 n/c/h/w, float32 pixels, u8 has-labels,
        optional n*u32 labels
  XCM1  cluster model: magic, u32 k, u32 r, k*r float32 centroids,
        k*r float32 stds, u32 n, n*u32 assignments, float64 inertia
  XCK1  checkpoint: magic, u32 header length, canonical-JSON header,
        u32 tensor count, then per tensor u16 name length, name bytes,
        u8 ndim, u32 dims, float32 payload

Every format round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .data import FeatureMatrix, ImageSet


class FormatError(Exception):
    """Base for artifact file errors."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class NonFiniteValueError(FormatError):
    pass


class ConfigMismatchError(FormatError):
    pass


FEATURE_MAGIC = b"XFV1"
IMAGE_MAGIC = b"XIM1"
CLUSTER_MAGIC = b"XCM1"
CHECKPOINT_MAGIC = b"XCK1"


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated file: expected {n} bytes for {what}, "
                                 f"got {len(buf)}")
    return buf


def _check_magic(fh, magic):
    got = fh.read(len(magic))
    if got != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, got {got!r}")


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"refusing to write non-finite values in {what}")


# -- features ---------------------------------------------------------------

def write_features(path, features: FeatureMatrix) -> None:
    _require_finite(features.values, "feature matrix")
    n, d = features.values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIB", n, d, 1 if features.normalized else 0))
        fh.write(np.ascontiguousarray(features.values, dtype="<f4").tobytes())


def feature_io(path, mode: str, features: FeatureMatrix | None = None):
    """Mode-based entry point: 'write' stores `features`, 'read' loads them."""
    if mode == "write":
        if features is None:
            raise ValueError("feature_io: write needs a feature matrix")
        write_features(path, features)
        return None
    if mode == "read":
        return read_features(path)
    raise ValueError(f"feature_io: unknown mode {mode!r}")


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        _check_magic(fh, FEATURE_MAGIC)
        n, d, norm = struct.unpack("<IIB", _read_exact(fh, 9, "feature header"))
        payload = _read_exact(fh, n * d * 4, f"{n}x{d} float32 payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return FeatureMatrix(values.astype(np.float64), normalized=bool(norm))


# -- images -----------------------------------------------------------------

def write_images(path, images: ImageSet) -> None:
    _require_finite(images.pixels, "image set")
    n, c, h, w = images.pixels.shape
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(struct.pack("<IIII", n, c, h, w))
        fh.write(np.ascontiguousarray(images.pixels, dtype="<f4").tobytes())
        if images.truth_labels is not None:
            fh.write(struct.pack("<B", 1))
            fh.write(np.ascontiguousarray(images.truth_labels, dtype="<u4").tobytes())
        else:
            fh.write(struct.pack("<B", 0))


def read_images(path) -> ImageSet:
    with open(path, "rb") as fh:
        _check_magic(fh, IMAGE_MAGIC)
        n, c, h, w = struct.unpack("<IIII", _read_exact(fh, 16, "image header"))
        payload = _read_exact(fh, n * c * h * w * 4, "pixel payload")
        (has_labels,) = struct.unpack("<B", _read_exact(fh, 1, "label flag"))
        labels = None
        if has_labels:
            labels = np.frombuffer(_read_exact(fh, n * 4, "labels"), dtype="<u4")
            labels = labels.astype(np.int64)
    pixels = np.frombuffer(payload, dtype="<f4").reshape(n, c, h, w)
    return ImageSet(pixels=pixels.copy(), truth_labels=labels)


# -- cluster models ----------------------------------------------------------

def write_cluster_model(path, model) -> None:
    _require_finite(model.centroids, "centroids")
    _require_finite(model.stds, "stds")
    k, r = model.centroids.shape
    n = model.assignments.shape[0]
    with open(path, "wb") as fh:
        fh.write(CLUSTER_MAGIC)
        fh.write(struct.pack("<II", k, r))
        fh.write(np.ascontiguousarray(model.centroids, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.stds, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", n))
        fh.write(np.ascontiguousarray(model.assignments, dtype="<u4").tobytes())
        fh.write(struct.pack("<d", float(model.inertia)))


def read_cluster_model(path):
    from .cluster import ClusterModel

    with open(path, "rb") as fh:
        _check_magic(fh, CLUSTER_MAGIC)
        k, r = struct.unpack("<II", _read_exact(fh, 8, "cluster header"))
        cents = np.frombuffer(_read_exact(fh, k * r * 4, "centroids"), dtype="<f4")
        stds = np.frombuffer(_read_exact(fh, k * r * 4, "stds"), dtype="<f4")
        (n,) = struct.unpack("<I", _read_exact(fh, 4, "assignment count"))
        assign = np.frombuffer(_read_exact(fh, n * 4, "assignments"), dtype="<u4")
        (inertia,) = struct.unpack("<d", _read_exact(fh, 8, "inertia"))
    return ClusterModel(
        centroids=cents.astype(np.float64).reshape(k, r),
        stds=stds.astype(np.float64).reshape(k, r),
        assignments=assign.astype(np.int64),
        inertia=inertia,
        check=False,
    )


# -- checkpoints ---------------------------------------------------------------

def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def write_checkpoint(path, header: dict, tensors: dict) -> None:
    blob = canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f4")  # tobytes() emits C order
            _require_finite(arr, f"tensor {name!r}")
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        _check_magic(fh, CHECKPOINT_MAGIC)
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header = json.loads(_read_exact(fh, hlen, "header"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, nlen, "tensor name").decode()
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "tensor rank"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "tensor shape"))
            numel = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            payload = _read_exact(fh, numel * 4, f"tensor {name!r} payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return header, tensors
