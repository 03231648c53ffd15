"""Synthetic five-pattern image corpus for desk-scale experiments.

Real fundus data cannot ship with the repository, so training, quantization
fidelity, and service tests run on a generated stand-in: five visually
distinct pattern families (one per severity grade), each a colored disc on a
dark field with class-specific ring structure, plus per-image brightness
jitter, center shift, and pixel noise.  The classes are linearly separable
by construction; a logistic-regression baseline confirms that in the tests.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ManifestEntry, Severity, save_manifest
from .imaging import PlaneTensor, RasterImage, denormalize, encode_ppm

__all__ = ["generate_arrays", "generate_corpus_files", "CLASS_COLORS"]

# Base RGB per severity grade, spread far apart for easy separability.
CLASS_COLORS = np.array(
    [
        [0.85, 0.20, 0.20],
        [0.20, 0.85, 0.20],
        [0.20, 0.30, 0.90],
        [0.85, 0.80, 0.15],
        [0.65, 0.20, 0.85],
    ],
    dtype=np.float64,
)


def _pattern(side: int, label: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    cx = (side - 1) / 2.0 + rng.uniform(-2.0, 2.0)
    cy = (side - 1) / 2.0 + rng.uniform(-2.0, 2.0)
    r = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2) / (side / 2.0)
    disc = np.clip(1.0 - r, 0.0, 1.0) ** 0.7
    # class-dependent ring frequency gives each grade its own texture
    rings = 0.5 + 0.5 * np.cos((label + 2) * 2.6 * np.pi * r)
    profile = disc * (0.65 + 0.35 * rings)

    color = CLASS_COLORS[label] * rng.uniform(0.85, 1.15)
    img = profile[:, :, None] * color[None, None, :]
    img += rng.normal(0.0, 0.04, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_arrays(
    n: int = 500, side: int = 32, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced corpus as network-ready arrays: (N, 3, side, side) float32
    images in [0, 1] and int64 labels.  Classes interleave deterministically."""
    rng = np.random.default_rng(seed)
    x = np.empty((n, 3, side, side), dtype=np.float32)
    y = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % len(Severity)
        img = _pattern(side, label, rng)
        x[i] = img.transpose(2, 0, 1).astype(np.float32)
        y[i] = label
    return x, y


def generate_corpus_files(
    out_dir: str | Path, n: int = 500, side: int = 64, seed: int = 0
) -> DatasetManifest:
    """Write the corpus as PPM files plus a manifest CSV under `out_dir`."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    x, y = generate_arrays(n, side, seed)
    entries = []
    for i in range(n):
        plane = PlaneTensor(np.ascontiguousarray(x[i].transpose(1, 2, 0)))
        raster: RasterImage = denormalize(plane)
        rel = f"images/sample{i:04d}.ppm"
        (out_dir / rel).write_bytes(encode_ppm(raster))
        entries.append(ManifestEntry(f"sample{i:04d}", rel, Severity(int(y[i]))))
    manifest = DatasetManifest(entries)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
