"""Procedural three-class digit-style dataset, written as standard IDX files.

Real MNIST / Fashion-MNIST paths are the primary ingestion route, but
this generator lets training-scale tests and the bundled presets run on
machines with no dataset downloads: it renders 28x28 grayscale glyphs
(rings, bars, zigzags for classes 0 / 1 / 2) with jittered geometry and
pixel noise, then emits the same file format the real datasets use so
the full ingestion pipeline is exercised.

Each class also carries a faint class-keyed background field spread
across the whole canvas. Like the non-robust features of natural image
data, the field is highly predictive on clean samples but diffuse and
low-contrast, so a bounded per-pixel adversary erases or forges it
easily while the concentrated glyph strokes survive. Cleanly trained
models latch onto the field and collapse under attack; adversarially
trained models learn to lean on the strokes instead, which is what
gives defended runs a measurable edge at moderate attack strengths.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC

SIDE = 28

_YS, _XS = np.mgrid[0:SIDE, 0:SIDE]
_YS = _YS.astype(np.float64)
_XS = _XS.astype(np.float64)

# One smooth background field per class, diffuse over the canvas.
_FIELDS = np.stack(
    [
        np.cos(2 * np.pi * _XS / SIDE),
        np.cos(2 * np.pi * _YS / SIDE),
        np.cos(2 * np.pi * (_XS + _YS) / SIDE),
    ]
)
FIELD_AMPLITUDE = 15.0
GLYPH_INTENSITY = (185.0, 235.0)
GLYPH_THICKNESS = (2.2, 3.0)
PIXEL_NOISE = 5.0


def _stroke_mask(dist: np.ndarray, thickness: float) -> np.ndarray:
    # Soft-edged stroke: 1 inside, linear falloff over one pixel.
    return np.clip(thickness + 1.0 - dist, 0.0, 1.0)


def _render_ring(rng: np.random.Generator, thickness: float) -> np.ndarray:
    cy = 13.5 + rng.uniform(-1.5, 1.5)
    cx = 13.5 + rng.uniform(-1.5, 1.5)
    ry = rng.uniform(7.5, 10.0)
    rx = rng.uniform(6.0, 8.5)
    radial = np.sqrt(((_YS - cy) / ry) ** 2 + ((_XS - cx) / rx) ** 2)
    return _stroke_mask(np.abs(radial - 1.0) * min(rx, ry), thickness)


def _render_bar(rng: np.random.Generator, thickness: float) -> np.ndarray:
    cx = 13.5 + rng.uniform(-2.5, 2.5)
    slope = rng.uniform(-0.15, 0.15)
    mask = _stroke_mask(np.abs(_XS - (cx + slope * (_YS - 13.5))), thickness)
    mask[(_YS < 3 + rng.uniform(0, 2)) | (_YS > 25 - rng.uniform(0, 2))] = 0.0
    return mask


def _render_zigzag(rng: np.random.Generator, thickness: float) -> np.ndarray:
    left = 5.0 + rng.uniform(-1.5, 1.5)
    right = 23.0 + rng.uniform(-1.5, 1.5)
    top = 5.0 + rng.uniform(-1.5, 1.5)
    bottom = 23.0 + rng.uniform(-1.5, 1.5)
    top_bar = _stroke_mask(np.abs(_YS - top), thickness)
    top_bar[(_XS < left) | (_XS > right)] = 0.0
    bottom_bar = _stroke_mask(np.abs(_YS - bottom), thickness)
    bottom_bar[(_XS < left) | (_XS > right)] = 0.0
    frac = (_YS - top) / max(bottom - top, 1e-9)
    diag = _stroke_mask(np.abs(_XS - (right + (left - right) * frac)), thickness)
    diag[(_YS < top) | (_YS > bottom)] = 0.0
    return np.maximum(np.maximum(top_bar, bottom_bar), diag)


_RENDERERS = (_render_ring, _render_bar, _render_zigzag)


def render_digits(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Render one 28x28 uint8 image per label in {0,1,2}."""
    images = np.empty((labels.size, SIDE, SIDE), dtype=np.uint8)
    for i, lab in enumerate(labels):
        lab = int(lab)
        glyph = _RENDERERS[lab](rng, rng.uniform(*GLYPH_THICKNESS))
        canvas = (
            glyph * rng.uniform(*GLYPH_INTENSITY)
            + FIELD_AMPLITUDE * (_FIELDS[lab] + 1.0)
            + rng.normal(0.0, PIXEL_NOISE, size=glyph.shape)
        )
        images[i] = np.clip(canvas, 0, 255).astype(np.uint8)
    return images


def _write_idx_images(path, images: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, images.shape[0], SIDE, SIDE))
        fh.write(images.astype(np.uint8).tobytes())


def _write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def write_synthetic_idx(out_dir, n_train: int, n_test: int, seed: int = 0) -> dict:
    """Generate balanced three-class IDX files under ``out_dir``.

    Returns the path dict {train_images, train_labels, test_images,
    test_labels}. Deterministic in (n_train, n_test, seed).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte",
        "train_labels": out_dir / "train-labels-idx1-ubyte",
        "test_images": out_dir / "t10k-images-idx3-ubyte",
        "test_labels": out_dir / "t10k-labels-idx1-ubyte",
    }
    for split, n, stream in (("train", n_train, 0), ("test", n_test, 1)):
        rng = np.random.default_rng([seed, stream])
        labels = np.arange(n, dtype=np.uint8) % 3
        rng.shuffle(labels)
        images = render_digits(labels, rng)
        _write_idx_images(paths[f"{split}_images"], images)
        _write_idx_labels(paths[f"{split}_labels"], labels)
    return {k: str(v) for k, v in paths.items()}
