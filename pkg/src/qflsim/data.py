"""Dataset ingestion and client partitioning.

IDX files (big-endian, magic 0x00000803 for images and 0x00000801 for
labels) are parsed into uint8 arrays, resized to 8x8 with bilinear
interpolation, scaled to [0, 1], and restricted to the classes {0, 1, 2}.
Training pools are split into per-client shards either by uniform
shuffle (IID) or by a stable label sort followed by contiguous slicing,
which yields near single-class clients.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IngestError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
KEPT_CLASSES = (0, 1, 2)


@dataclass(frozen=True)
class SplitSpec:
    """How the training pool is subsampled and partitioned across clients."""

    n_train: int = 18000
    n_test: int = 1000
    mode: str = "iid"
    n_clients: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("iid", "sorted_noniid"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("n_train and n_test must be >= 0")
        if self.n_clients < 1:
            raise ConfigError("n_clients must be >= 1")


@dataclass(frozen=True)
class Shard:
    """One client's private slice of the training set."""

    client_id: int
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


# ---------------------------------------------------------------------------
# IDX parsing
# ---------------------------------------------------------------------------


def _read_exact(fh, count: int, path, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IngestError(
            f"{path}: truncated at offset {offset + len(data)}, wanted {count} bytes"
        )
    return data


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read paired IDX image/label files into (N, rows, cols) and (N,) arrays."""
    with open(images_path, "rb") as fh:
        header = _read_exact(fh, 16, images_path, 0)
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise IngestError(
                f"{images_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        body = _read_exact(fh, count * rows * cols, images_path, 16)
        images = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as fh:
        header = _read_exact(fh, 8, labels_path, 0)
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise IngestError(
                f"{labels_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        body = _read_exact(fh, label_count, labels_path, 8)
        labels = np.frombuffer(body, dtype=np.uint8)
    if label_count != count:
        raise IngestError(
            f"{labels_path}: {label_count} labels but {images_path} holds {count} images"
        )
    return images, labels


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def resize_bilinear(images: np.ndarray, out_side: int = 8) -> np.ndarray:
    """Bilinear resize of (..., H, W) images, sampling at pixel centers."""
    images = np.asarray(images, dtype=np.float64)
    h, w = images.shape[-2:]

    def axis_coords(n_in: int):
        src = (np.arange(out_side) + 0.5) * (n_in / out_side) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    ry0, ry1, fy = axis_coords(h)
    cx0, cx1, fx = axis_coords(w)
    top = images[..., ry0, :][..., :, cx0] * (1 - fx) + images[..., ry0, :][..., :, cx1] * fx
    bot = images[..., ry1, :][..., :, cx0] * (1 - fx) + images[..., ry1, :][..., :, cx1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def preprocess(images: np.ndarray, labels: np.ndarray, out_side: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Resize to 8x8, scale to [0,1], keep only classes {0,1,2}; returns (X, y)."""
    labels = np.asarray(labels)
    keep = np.isin(labels, KEPT_CLASSES)
    small = resize_bilinear(np.asarray(images, dtype=np.float64)[keep], out_side) / 255.0
    x = small.reshape(small.shape[0], out_side * out_side)
    return x, labels[keep].astype(np.int64)


def pool_2x2(x: np.ndarray) -> np.ndarray:
    """Average-pool 64-pixel rows (8x8) down to 16 (4x4), for the 4-qubit mode."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 64:
        raise ConfigError(f"expected 64-pixel rows, got {x.shape[-1]}")
    imgs = x.reshape(x.shape[:-1] + (8, 8))
    pooled = imgs.reshape(x.shape[:-1] + (4, 2, 4, 2)).mean(axis=(-3, -1))
    return pooled.reshape(x.shape[:-1] + (16,))


# ---------------------------------------------------------------------------
# Subsampling and partitioning
# ---------------------------------------------------------------------------


def subsample(
    train_pool: tuple[np.ndarray, np.ndarray],
    test_pool: tuple[np.ndarray, np.ndarray],
    n_train: int,
    n_test: int,
    seed: int,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffle of each pool, then take the first n_train / n_test."""

    def take(pool, n, stream):
        x, y = pool
        if n > x.shape[0]:
            raise IngestError(f"requested {n} samples but only {x.shape[0]} available")
        order = np.random.default_rng([seed, stream]).permutation(x.shape[0])[:n]
        return x[order], y[order]

    return take(train_pool, n_train, 0), take(test_pool, n_test, 1)


def _slice_sizes(n: int, k: int) -> list[int]:
    # Remainder samples go round-robin to the lowest client ids.
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def partition(x: np.ndarray, y: np.ndarray, spec: SplitSpec) -> list[Shard]:
    """Split a training set into per-client shards (IID or label-sorted)."""
    n = x.shape[0]
    if spec.mode == "iid":
        order = np.random.default_rng([spec.seed, 2]).permutation(n)
    else:
        order = np.argsort(y, kind="stable")
    shards = []
    start = 0
    for cid, size in enumerate(_slice_sizes(n, spec.n_clients)):
        sel = order[start : start + size]
        shards.append(Shard(client_id=cid, x=x[sel], y=y[sel]))
        start += size
    return shards


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_dataset_manifest(path, files: dict, spec: SplitSpec, counts: dict) -> None:
    """Record file paths, checksums, the split spec, and pre/post-filter counts."""
    payload = {
        "files": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in files.items()},
        "split": {
            "n_train": spec.n_train,
            "n_test": spec.n_test,
            "mode": spec.mode,
            "n_clients": spec.n_clients,
            "seed": spec.seed,
        },
        "counts": counts,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
