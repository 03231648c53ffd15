"""Contrast-limited adaptive histogram equalization.

The image is split into a grid of tiles (edge tiles may be smaller).  Each
tile gets a 256-bin histogram, clipped at ceil(clip_limit * N / 256) with the
clipped mass redistributed across bins, then turned into an equalization
mapping through its CDF.  Per-pixel output blends the mappings of the four
nearest tile centers bilinearly, which removes tile seams.

With a 1x1 grid and an infinite clip limit this degenerates to plain global
histogram equalization, which is the test oracle for the whole machinery.

Color images are equalized on the luminance plane only: Y is remapped and
each channel is rescaled by Y'/Y, avoiding the hue shifts per-channel
equalization would cause.
"""

from __future__ import annotations

import math

import numpy as np

from .imaging import PreprocessConfig, RasterImage

__all__ = ["clahe", "clip_histogram", "equalization_mapping"]

_BINS = 256


def clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    """Clip bins at `limit` and redistribute the excess.

    Redistribution waterfills: every bin with headroom receives an equal
    share, remainders go one count each to the lowest-indexed open bins.
    No bin ends above `limit` (possible because limit >= N/256 guarantees
    total capacity).
    """
    hist = hist.astype(np.int64).copy()
    excess = int(np.maximum(hist - limit, 0).sum())
    np.minimum(hist, limit, out=hist)
    while excess > 0:
        room = limit - hist
        open_bins = np.flatnonzero(room > 0)
        if open_bins.size == 0:
            break
        share = excess // open_bins.size
        if share == 0:
            hist[open_bins[:excess]] += 1
            excess = 0
        else:
            add = np.minimum(room[open_bins], share)
            hist[open_bins] += add
            excess -= int(add.sum())
    return hist


def equalization_mapping(hist: np.ndarray, n_pixels: int) -> np.ndarray:
    """Histogram-equalization lookup table from a (possibly clipped) histogram.

    map(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255), with cdf_min the
    first nonzero CDF value.  A constant tile (N == cdf_min) maps to identity.
    """
    cdf = np.cumsum(hist)
    nonzero = np.flatnonzero(hist)
    if nonzero.size == 0:
        return np.arange(_BINS, dtype=np.uint8)
    cdf_min = cdf[nonzero[0]]
    denom = n_pixels - cdf_min
    if denom <= 0:
        return np.arange(_BINS, dtype=np.uint8)
    table = np.rint((cdf - cdf_min) / denom * 255.0)
    return np.clip(table, 0, 255).astype(np.uint8)


def _clahe_gray(plane: np.ndarray, clip_limit: float, tiles: tuple[int, int]) -> np.ndarray:
    h, w = plane.shape
    tx = min(tiles[0], w)
    ty = min(tiles[1], h)
    tile_w = math.ceil(w / tx)
    tile_h = math.ceil(h / ty)

    maps = np.empty((ty, tx, _BINS), dtype=np.uint8)
    centers_x = np.empty(tx)
    centers_y = np.empty(ty)
    for j in range(ty):
        y0, y1 = j * tile_h, min((j + 1) * tile_h, h)
        centers_y[j] = (y0 + y1 - 1) / 2.0
        for i in range(tx):
            x0, x1 = i * tile_w, min((i + 1) * tile_w, w)
            centers_x[i] = (x0 + x1 - 1) / 2.0
            tile = plane[y0:y1, x0:x1]
            hist = np.bincount(tile.ravel(), minlength=_BINS)
            if np.count_nonzero(hist) <= 1:
                # constant tile: the CDF formula degenerates, keep identity
                maps[j, i] = np.arange(_BINS, dtype=np.uint8)
                continue
            if math.isfinite(clip_limit):
                limit = math.ceil(clip_limit * tile.size / _BINS)
                hist = clip_histogram(hist, limit)
            maps[j, i] = equalization_mapping(hist, tile.size)

    ix0, ix1, wx = _blend_axis(np.arange(w, dtype=np.float64), centers_x)
    iy0, iy1, wy = _blend_axis(np.arange(h, dtype=np.float64), centers_y)

    v = plane  # (h, w) uint8 values index the 256-entry maps
    rows0, rows1 = iy0[:, None], iy1[:, None]
    cols0, cols1 = ix0[None, :], ix1[None, :]
    m00 = maps[rows0, cols0, v].astype(np.float64)
    m01 = maps[rows0, cols1, v].astype(np.float64)
    m10 = maps[rows1, cols0, v].astype(np.float64)
    m11 = maps[rows1, cols1, v].astype(np.float64)
    wxg = wx[None, :]
    wyg = wy[:, None]
    out = (
        m00 * (1 - wyg) * (1 - wxg)
        + m01 * (1 - wyg) * wxg
        + m10 * wyg * (1 - wxg)
        + m11 * wyg * wxg
    )
    return np.rint(out).astype(np.uint8)


def _blend_axis(coords: np.ndarray, centers: np.ndarray):
    """Neighboring tile indices and blend weight per pixel coordinate.

    Pixels beyond the first/last tile center clamp to that tile (weight 0
    against itself), so borders use a single mapping.
    """
    n = centers.size
    if n == 1:
        zeros = np.zeros(coords.size, dtype=np.intp)
        return zeros, zeros, np.zeros(coords.size)
    hi = np.searchsorted(centers, coords, side="right")
    hi = np.clip(hi, 1, n - 1)
    lo = hi - 1
    span = centers[hi] - centers[lo]
    weight = np.clip((coords - centers[lo]) / span, 0.0, 1.0)
    return lo.astype(np.intp), hi.astype(np.intp), weight


def clahe(img: RasterImage, cfg: PreprocessConfig | None = None) -> RasterImage:
    """Equalize a RasterImage; 3-channel input is handled via luminance."""
    cfg = cfg or PreprocessConfig()
    if img.channels == 1:
        out = _clahe_gray(img.data[:, :, 0], cfg.clahe_clip_limit, cfg.clahe_tiles)
        return RasterImage(out[:, :, None])

    rgb = img.data.astype(np.float64)
    y = np.rint(0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2])
    y = np.clip(y, 0, 255).astype(np.uint8)
    y_eq = _clahe_gray(y, cfg.clahe_clip_limit, cfg.clahe_tiles).astype(np.float64)
    gain = y_eq / np.maximum(y.astype(np.float64), 1.0)
    out = np.clip(np.rint(rgb * gain[:, :, None]), 0, 255).astype(np.uint8)
    return RasterImage(out)
