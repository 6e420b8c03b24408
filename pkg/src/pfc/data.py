"""Input data: synthetic Gaussian mixtures and IDX-format digit files."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import FeatureSet

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


def gen_gaussian_mixture(
    num_classes: int,
    dim: int,
    per_class: int,
    mean_scale: float = 1.0,
    noise_scale: float = 1.0,
    seed=0,
) -> tuple[FeatureSet, np.ndarray]:
    """Balanced isotropic Gaussian mixture with class means on a sphere.

    Class means are drawn uniformly on the unit sphere and scaled by
    ``mean_scale``; each sample is its class mean plus
    ``noise_scale`` * N(0, I) noise.  Columns are class-contiguous, so the
    returned labels are simply 0..K-1 each repeated ``per_class`` times.
    """
    if noise_scale < 0 or mean_scale < 0:
        raise ValueError("mean_scale and noise_scale must be >= 0")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((dim, num_classes))
    means /= np.linalg.norm(means, axis=0, keepdims=True)
    means *= mean_scale
    features = np.repeat(means, per_class, axis=1)
    features += noise_scale * rng.standard_normal(features.shape)
    labels = np.repeat(np.arange(num_classes), per_class)
    return FeatureSet(features, num_classes, per_class), labels


def _read_idx(path: Path, expected_magic: int, rank: int) -> np.ndarray:
    raw = path.read_bytes()
    header = 4 * (1 + rank)
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + rank}i", raw[:header])
    if fields[0] != expected_magic:
        raise ValueError(
            f"{path}: bad IDX magic {fields[0]}, expected {expected_magic}"
        )
    shape = fields[1:]
    count = int(np.prod(shape))
    if len(raw) != header + count:
        raise ValueError(
            f"{path}: expected {header + count} bytes for shape {shape}, "
            f"got {len(raw)}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def load_mnist_idx(
    images_path, labels_path, per_class: int
) -> tuple[FeatureSet, np.ndarray]:
    """Balanced subset of an IDX image/label file pair.

    Takes the first ``per_class`` samples of every class in label order,
    flattens images to columns, and scales pixels to [0, 1].  The label
    values must cover 0..K-1 for some K >= 2.

    Raises:
        ValueError: on bad magic numbers, truncated files, mismatched image
            and label counts, or classes with fewer than ``per_class``
            samples.
    """
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    images = _read_idx(Path(images_path), IDX_IMAGE_MAGIC, rank=3)
    labels = _read_idx(Path(labels_path), IDX_LABEL_MAGIC, rank=1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    classes = np.unique(labels)
    num_classes = len(classes)
    if num_classes < 2 or not np.array_equal(classes, np.arange(num_classes)):
        raise ValueError(f"labels must cover 0..K-1 for K >= 2, got {classes}")

    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    columns = []
    for k in range(num_classes):
        idx = np.flatnonzero(labels == k)
        if len(idx) < per_class:
            raise ValueError(
                f"class {k} has {len(idx)} samples, need {per_class}"
            )
        columns.append(flat[idx[:per_class]].T)
    features = np.concatenate(columns, axis=1)
    out_labels = np.repeat(np.arange(num_classes), per_class)
    return FeatureSet(features, num_classes, per_class), out_labels
