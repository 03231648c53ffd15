import math

import numpy as np
import pytest

from drscreen.clahe import clahe, clip_histogram, equalization_mapping
from drscreen.imaging import PreprocessConfig, RasterImage


def global_hist_eq_bruteforce(plane: np.ndarray) -> np.ndarray:
    """Independent oracle: plain global histogram equalization by counting."""
    counts = [0] * 256
    for v in plane.ravel():
        counts[int(v)] += 1
    cdf = []
    running = 0
    for c in counts:
        running += c
        cdf.append(running)
    cdf_min = next((cdf[v] for v in range(256) if counts[v] > 0), 0)
    n = plane.size
    if n - cdf_min <= 0:
        return plane.copy()
    out = np.empty_like(plane)
    for i in range(plane.shape[0]):
        for j in range(plane.shape[1]):
            v = int(plane[i, j])
            out[i, j] = round((cdf[v] - cdf_min) / (n - cdf_min) * 255)
    return out


def one_tile_config(clip=math.inf) -> PreprocessConfig:
    return PreprocessConfig(clahe_clip_limit=clip, clahe_tiles=(1, 1))


def test_single_tile_unclipped_equals_global_equalization():
    rng = np.random.default_rng(0)
    for trial in range(50):
        plane = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        out = clahe(RasterImage(plane[:, :, None]), one_tile_config())
        expect = global_hist_eq_bruteforce(plane)
        np.testing.assert_array_equal(out.data[:, :, 0], expect, err_msg=f"trial {trial}")


def test_constant_image_maps_to_itself():
    img = RasterImage(np.full((12, 10, 1), 77, dtype=np.uint8))
    out = clahe(img, PreprocessConfig(clahe_clip_limit=2.0, clahe_tiles=(4, 4)))
    np.testing.assert_array_equal(out.data, img.data)


def test_sixteen_level_ramp_mapping():
    # 4x4 with the 16 values {0, 17, 34, ..., 255}: the equalization map sends
    # the k-th smallest value to round(k/15*255) = 17k, i.e. identity here
    values = (np.arange(16, dtype=np.uint8) * 17).reshape(4, 4)
    out = clahe(RasterImage(values[:, :, None]), one_tile_config())
    np.testing.assert_array_equal(out.data[:, :, 0], values)


def test_clip_histogram_bounds_bins():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = 64 * 64
        hist = rng.multinomial(n, rng.dirichlet(np.full(256, 0.05)))
        for limit_factor in (1.0, 2.0, 4.0):
            limit = math.ceil(limit_factor * n / 256)
            clipped = clip_histogram(hist, limit)
            assert clipped.sum() == n  # mass preserved
            assert clipped.max() <= limit + 1


def test_clip_histogram_extreme_concentration():
    hist = np.zeros(256, dtype=np.int64)
    hist[5] = 4096  # constant tile
    limit = math.ceil(2.0 * 4096 / 256)
    clipped = clip_histogram(hist, limit)
    assert clipped.sum() == 4096
    assert clipped.max() <= limit + 1


def test_equalization_mapping_degenerate_is_identity():
    hist = np.zeros(256, dtype=np.int64)
    hist[42] = 100
    table = equalization_mapping(hist, 100)
    np.testing.assert_array_equal(table, np.arange(256))


def test_tiled_output_preserves_shape_and_range():
    rng = np.random.default_rng(2)
    img = RasterImage(rng.integers(0, 256, size=(37, 41, 1), dtype=np.uint8))
    out = clahe(img, PreprocessConfig(clahe_clip_limit=2.0, clahe_tiles=(8, 8)))
    assert out.data.shape == img.data.shape
    assert out.data.dtype == np.uint8


def test_grid_larger_than_image_is_safe():
    img = RasterImage(np.arange(16, dtype=np.uint8).reshape(4, 4, 1) * 15)
    out = clahe(img, PreprocessConfig(clahe_clip_limit=2.0, clahe_tiles=(8, 8)))
    assert out.data.shape == img.data.shape


def test_rgb_constant_hue_preserved():
    # pure red field: luminance equalization must not introduce green or blue
    img = np.zeros((16, 16, 3), dtype=np.uint8)
    img[:, :, 0] = 200
    out = clahe(RasterImage(img), PreprocessConfig(clahe_tiles=(2, 2)))
    assert out.data[:, :, 1].max() == 0
    assert out.data[:, :, 2].max() == 0


def test_rgb_improves_contrast_of_dim_image():
    rng = np.random.default_rng(3)
    dim = rng.integers(90, 110, size=(32, 32, 3), dtype=np.uint8)
    out = clahe(RasterImage(dim), PreprocessConfig(clahe_tiles=(2, 2)))
    assert np.ptp(out.data.astype(int)) > np.ptp(dim.astype(int))


def test_deterministic():
    rng = np.random.default_rng(4)
    img = RasterImage(rng.integers(0, 256, size=(24, 24, 1), dtype=np.uint8))
    cfg = PreprocessConfig()
    a = clahe(img, cfg)
    b = clahe(img, cfg)
    np.testing.assert_array_equal(a.data, b.data)
