"""Fundus image handling: decoding, preprocessing, and augmentation operators.

Images live in two forms.  ``RasterImage`` is the decoded 8-bit picture,
row-major ``(height, width, channels)`` uint8.  ``PlaneTensor`` is its
floating counterpart in [0, 1], produced by :func:`normalize` and consumed
by the network.  All operators are pure functions; stochastic ones take an
explicit seed and are bit-reproducible (see :mod:`drscreen.rng`).

Geometry conventions: bilinear sampling uses half-pixel centers
(source = (dst + 0.5) * src/dst - 0.5) with edge clamping; rotation is
clockwise for positive angles, resampled about the image center with zeros
outside the frame, and multiples of 90 degrees are exact index permutations.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

__all__ = [
    "RasterImage",
    "PlaneTensor",
    "PreprocessConfig",
    "AugmentOp",
    "ImagingError",
    "UnsupportedFormat",
    "CorruptData",
    "ZeroDimension",
    "decode_image",
    "encode_ppm",
    "normalize",
    "denormalize",
    "resize_bilinear",
    "hflip",
    "vflip",
    "rotate",
    "brightness",
    "contrast",
    "gaussian_noise",
    "zoom",
    "apply_augment",
    "preprocess",
    "write_plane_tensor",
    "read_plane_tensor",
]


class ImagingError(Exception):
    pass


class UnsupportedFormat(ImagingError):
    """Byte stream is not PNG, JPEG, or binary PPM."""


class CorruptData(ImagingError):
    """Recognized encoding but truncated or internally inconsistent."""


class ZeroDimension(ImagingError):
    """Requested output width or height below 1."""


@dataclass(frozen=True)
class RasterImage:
    """Decoded 8-bit image, data shaped (height, width, channels) uint8."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.dtype != np.uint8:
            raise ValueError("RasterImage wants (H, W, C) uint8 data")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        if d.shape[2] not in (1, 3):
            raise ValueError("channel count must be 1 or 3")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PlaneTensor:
    """Floating image, data shaped (height, width, channels) float32."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.dtype != np.float32:
            raise ValueError("PlaneTensor wants (H, W, C) float32 data")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        if d.shape[2] not in (1, 3):
            raise ValueError("channel count must be 1 or 3")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PreprocessConfig:
    target_width: int = 226
    target_height: int = 226
    clahe_clip_limit: float = 2.0  # >= 1.0, math.inf disables clipping
    clahe_tiles: tuple[int, int] = (8, 8)  # (cols, rows)
    clahe_before_resize: bool = False  # default order: resize, then CLAHE

    def __post_init__(self):
        if self.target_width < 8 or self.target_height < 8:
            raise ValueError("target dimensions must be >= 8")
        if not self.clahe_clip_limit >= 1.0:
            raise ValueError("clip limit must be >= 1.0")
        tx, ty = self.clahe_tiles
        if tx < 1 or ty < 1:
            raise ValueError("tile grid must be >= 1x1")


# Augmentation operators.  Stochastic kinds (noise) carry their own seed so a
# plan entry replays to identical bytes.
_OP_KINDS = ("hflip", "vflip", "rotate", "brightness", "contrast", "noise", "zoom")


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    param: float = 0.0  # angle, factor, or sigma depending on kind
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _OP_KINDS:
            raise ValueError(f"unknown augment op kind {self.kind!r}")
        if self.kind in ("brightness", "contrast") and not self.param > 0:
            raise ValueError(f"{self.kind} factor must be > 0")
        if self.kind == "zoom" and not self.param >= 1.0:
            raise ValueError("zoom factor must be >= 1.0")
        if self.kind == "noise" and self.param < 0:
            raise ValueError("noise sigma must be >= 0")

    def encode(self) -> str:
        """Compact string form used in plan/manifest CSV files."""
        if self.kind in ("hflip", "vflip"):
            return self.kind
        if self.kind == "noise":
            return f"{self.kind}:{self.param!r}:{self.seed}"
        return f"{self.kind}:{self.param!r}"

    @staticmethod
    def decode(text: str) -> "AugmentOp":
        parts = text.split(":")
        kind = parts[0]
        if kind in ("hflip", "vflip"):
            if len(parts) != 1:
                raise ValueError(f"bad op string {text!r}")
            return AugmentOp(kind)
        if kind == "noise":
            if len(parts) != 3:
                raise ValueError(f"bad op string {text!r}")
            return AugmentOp(kind, float(parts[1]), int(parts[2]))
        if kind in _OP_KINDS and len(parts) == 2:
            return AugmentOp(kind, float(parts[1]))
        raise ValueError(f"bad op string {text!r}")


# ---------------------------------------------------------------------------
# Decoding

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def decode_image(blob: bytes) -> RasterImage:
    """Decode PNG, JPEG, or binary PPM (P6) bytes into a RasterImage."""
    if len(blob) >= 2 and blob[:2] == b"P6":
        return _decode_ppm(blob)
    if blob.startswith(_PNG_MAGIC) or blob.startswith(_JPEG_MAGIC):
        return _decode_pillow(blob)
    raise UnsupportedFormat("expected PNG, JPEG, or binary PPM (P6) data")


def _decode_pillow(blob: bytes) -> RasterImage:
    from PIL import Image

    # only reached when the magic already matched PNG/JPEG, so any decoder
    # failure means a corrupt stream rather than an unsupported format
    try:
        with Image.open(io.BytesIO(blob)) as im:
            im.load()
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:  # truncated stream, bad CRC, ...
        raise CorruptData(str(exc)) from exc
    return RasterImage(np.ascontiguousarray(arr))


def _decode_ppm(blob: bytes) -> RasterImage:
    """Binary PPM "P6", maxval 255.  Header tokens may be separated by any
    whitespace and '#' comments."""
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(blob):
            c = blob[pos : pos + 1]
            if c == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptData("truncated PPM header")
        return blob[start:pos]

    magic = next_token()
    if magic != b"P6":
        raise UnsupportedFormat(f"not a P6 PPM: magic {magic!r}")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise CorruptData(f"bad PPM header: {exc}") from exc
    if width < 1 or height < 1:
        raise CorruptData("PPM dimensions must be positive")
    if maxval != 255:
        raise CorruptData(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = blob[pos : pos + need]
    if len(raw) != need:
        raise CorruptData(f"PPM pixel data truncated: want {need}, have {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(arr.copy())


def encode_ppm(img: RasterImage) -> bytes:
    """Serialize a 3-channel RasterImage as binary PPM (P6)."""
    if img.channels != 3:
        raise ValueError("PPM P6 requires 3 channels")
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


# ---------------------------------------------------------------------------
# Intensity scaling

def normalize(img: RasterImage) -> PlaneTensor:
    """Scale 8-bit samples to [0, 1] by dividing by 255."""
    return PlaneTensor((img.data.astype(np.float32) / np.float32(255.0)))


def denormalize(img: PlaneTensor) -> RasterImage:
    """Back to 8-bit: clamp to [0, 1], scale by 255, round half-even."""
    scaled = np.clip(img.data.astype(np.float64), 0.0, 1.0) * 255.0
    return RasterImage(np.rint(scaled).astype(np.uint8))


# ---------------------------------------------------------------------------
# Geometry

def _source_coords(dst_n: int, src_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-center source coordinates, split into lower index, upper
    index, and fractional weight, edge-clamped."""
    s = (np.arange(dst_n, dtype=np.float64) + 0.5) * (src_n / dst_n) - 0.5
    lo = np.floor(s)
    frac = s - lo
    lo = np.clip(lo, 0, src_n - 1).astype(np.intp)
    hi = np.clip(lo + 1, 0, src_n - 1)
    return lo, hi, frac


def _resize_array(data: np.ndarray, w: int, h: int) -> np.ndarray:
    src_h, src_w = data.shape[:2]
    if w == src_w and h == src_h:
        return data.copy()
    x0, x1, fx = _source_coords(w, src_w)
    y0, y1, fy = _source_coords(h, src_h)
    plane = data.astype(np.float64)
    top = plane[y0][:, x0] * (1 - fx)[None, :, None] + plane[y0][:, x1] * fx[None, :, None]
    bot = plane[y1][:, x0] * (1 - fx)[None, :, None] + plane[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def resize_bilinear(img, w: int, h: int):
    """Resize to w x h with bilinear interpolation; preserves the input kind."""
    if w < 1 or h < 1:
        raise ZeroDimension(f"target {w}x{h} is not a valid size")
    if isinstance(img, RasterImage):
        if w == img.width and h == img.height:
            return RasterImage(img.data.copy())
        out = _resize_array(img.data, w, h)
        return RasterImage(np.rint(out).astype(np.uint8))
    if isinstance(img, PlaneTensor):
        return PlaneTensor(_resize_array(img.data, w, h).astype(np.float32))
    raise TypeError("expected RasterImage or PlaneTensor")


def hflip(img):
    """Reverse column order.  Involution."""
    if isinstance(img, RasterImage):
        return RasterImage(np.ascontiguousarray(img.data[:, ::-1]))
    return PlaneTensor(np.ascontiguousarray(img.data[:, ::-1]))


def vflip(img):
    """Reverse row order.  Involution."""
    if isinstance(img, RasterImage):
        return RasterImage(np.ascontiguousarray(img.data[::-1]))
    return PlaneTensor(np.ascontiguousarray(img.data[::-1]))


def rotate(img, angle_deg: float):
    """Rotate clockwise by angle_deg about the image center.

    Multiples of 90 degrees are exact permutations; other angles resample
    bilinearly with zero fill outside the source frame.
    """
    raster = isinstance(img, RasterImage)
    data = img.data
    angle = float(angle_deg) % 360.0
    if angle == 0.0:
        out = data.copy()
        return RasterImage(out) if raster else PlaneTensor(out)
    if angle % 90.0 == 0.0:
        # np.rot90 with k=-1 is one clockwise quarter turn
        out = np.ascontiguousarray(np.rot90(data, k=-int(angle // 90)))
        return RasterImage(out) if raster else PlaneTensor(out)

    h, w = data.shape[:2]
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    xs = np.arange(w, dtype=np.float64) - cx
    ys = np.arange(h, dtype=np.float64) - cy
    gx, gy = np.meshgrid(xs, ys)
    # inverse map: destination point back into the source frame
    sx = cos_t * gx + sin_t * gy + cx
    sy = -sin_t * gx + cos_t * gy + cy

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    valid = (sx >= -0.5) & (sx <= w - 0.5) & (sy >= -0.5) & (sy <= h - 0.5)

    x0i = np.clip(x0, 0, w - 1).astype(np.intp)
    x1i = np.clip(x0 + 1, 0, w - 1).astype(np.intp)
    y0i = np.clip(y0, 0, h - 1).astype(np.intp)
    y1i = np.clip(y0 + 1, 0, h - 1).astype(np.intp)

    plane = data.astype(np.float64)
    out = (
        plane[y0i, x0i] * ((1 - fy) * (1 - fx))[:, :, None]
        + plane[y0i, x1i] * ((1 - fy) * fx)[:, :, None]
        + plane[y1i, x0i] * (fy * (1 - fx))[:, :, None]
        + plane[y1i, x1i] * (fy * fx)[:, :, None]
    )
    out[~valid] = 0.0
    if raster:
        return RasterImage(np.rint(out).astype(np.uint8))
    return PlaneTensor(out.astype(np.float32))


# ---------------------------------------------------------------------------
# Photometric operators (PlaneTensor in, PlaneTensor out)

def brightness(img: PlaneTensor, factor: float) -> PlaneTensor:
    """out = clamp(in * factor, 0, 1)."""
    if not factor > 0:
        raise ValueError("brightness factor must be > 0")
    out = np.clip(img.data.astype(np.float64) * factor, 0.0, 1.0)
    return PlaneTensor(out.astype(np.float32))


def contrast(img: PlaneTensor, factor: float) -> PlaneTensor:
    """out = clamp(mean + factor * (in - mean), 0, 1), mean over the plane."""
    if not factor > 0:
        raise ValueError("contrast factor must be > 0")
    data = img.data.astype(np.float64)
    mean = data.mean()
    out = np.clip(mean + factor * (data - mean), 0.0, 1.0)
    return PlaneTensor(out.astype(np.float32))


def gaussian_noise(img: PlaneTensor, sigma: float, seed: int) -> PlaneTensor:
    """Add seeded N(0, sigma^2) per sample, clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return PlaneTensor(img.data.copy())
    noise = _splitmix_normals(seed, img.data.size).reshape(img.data.shape)
    out = np.clip(img.data.astype(np.float64) + sigma * noise, 0.0, 1.0)
    return PlaneTensor(out.astype(np.float32))


def zoom(img: PlaneTensor, factor: float) -> PlaneTensor:
    """Center-crop by the zoom factor, then resize back to the input dims."""
    if not factor >= 1.0:
        raise ValueError("zoom factor must be >= 1.0")
    if factor == 1.0:
        return PlaneTensor(img.data.copy())
    h, w = img.height, img.width
    ch = max(1, round(h / factor))
    cw = max(1, round(w / factor))
    top = (h - ch) // 2
    left = (w - cw) // 2
    crop = PlaneTensor(np.ascontiguousarray(img.data[top : top + ch, left : left + cw]))
    return resize_bilinear(crop, w, h)


def apply_augment(img: PlaneTensor, op: AugmentOp) -> PlaneTensor:
    """Dispatch a plan entry onto its operator."""
    if op.kind == "hflip":
        return hflip(img)
    if op.kind == "vflip":
        return vflip(img)
    if op.kind == "rotate":
        return rotate(img, op.param)
    if op.kind == "brightness":
        return brightness(img, op.param)
    if op.kind == "contrast":
        return contrast(img, op.param)
    if op.kind == "noise":
        return gaussian_noise(img, op.param, op.seed)
    if op.kind == "zoom":
        return zoom(img, op.param)
    raise ValueError(f"unknown op kind {op.kind!r}")


def _splitmix_normals(seed: int, n: int) -> np.ndarray:
    """Vectorized SplitMix64 + Box-Muller, identical stream to
    :meth:`drscreen.rng.SplitMix64.normals`."""
    m = (n + 1) // 2 * 2  # uniforms consumed, one pair per two normals
    idx = np.arange(1, m + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    u = (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    u1 = np.maximum(u[0::2], 2.0**-53)
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(m, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


# ---------------------------------------------------------------------------
# Pipeline and tensor serialization

def preprocess(img: RasterImage, cfg: PreprocessConfig | None = None) -> PlaneTensor:
    """Standard inference pipeline: resize, CLAHE, normalize.

    Set cfg.clahe_before_resize to equalize at native resolution instead.
    """
    from .clahe import clahe

    cfg = cfg or PreprocessConfig()
    if cfg.clahe_before_resize:
        img = clahe(img, cfg)
        img = resize_bilinear(img, cfg.target_width, cfg.target_height)
    else:
        img = resize_bilinear(img, cfg.target_width, cfg.target_height)
        img = clahe(img, cfg)
    return normalize(img)


_PTNS_MAGIC = b"PTNS"


def write_plane_tensor(img: PlaneTensor) -> bytes:
    """16-byte header (magic, u32 width/height/channels LE) + f32 LE samples."""
    header = _PTNS_MAGIC + struct.pack("<III", img.width, img.height, img.channels)
    return header + img.data.astype("<f4").tobytes()


def read_plane_tensor(blob: bytes) -> PlaneTensor:
    if len(blob) < 16 or blob[:4] != _PTNS_MAGIC:
        raise CorruptData("not a PTNS stream")
    w, h, c = struct.unpack("<III", blob[4:16])
    need = w * h * c * 4
    if len(blob) != 16 + need:
        raise CorruptData("PTNS payload length mismatch")
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(h, w, c)
    return PlaneTensor(np.ascontiguousarray(data, dtype=np.float32))
