"""Raster containers, color conversion, and ROI cropping.

All rasters are immutable value objects wrapping read-only numpy arrays in
row-major order with the origin at the top-left corner (y grows downward).
HSV follows the hexcone model with hue as floating degrees in [0, 360) and
saturation/value as fractions in [0, 1]; the hue of an achromatic pixel is 0.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RoiOutOfBounds


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"RgbImage expects (h, w, 3) data, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("RgbImage must be at least 1x1")
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensity raster of shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"GrayImage expects (h, w) data, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("GrayImage must be at least 1x1")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Raster whose elements are exactly 0 or 255."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"BinaryMask expects (h, w) data, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("BinaryMask must be at least 1x1")
        if not np.isin(arr, (0, 255)).all():
            raise ValueError("BinaryMask elements must be exactly 0 or 255")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class Roi:
    """Rectangle in frame coordinates; y=0 is the top row."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("Roi width and height must be >= 1")
        if self.x < 0 or self.y < 0:
            raise ValueError("Roi origin must be non-negative")


@dataclass(frozen=True)
class HsvPixel:
    h: float  # degrees in [0, 360)
    s: float  # fraction in [0, 1]
    v: float  # fraction in [0, 1]


@dataclass(frozen=True)
class HsvRange:
    """Inclusive HSV bounds; the hue band may wrap across 360 -> 0."""

    h_lo: float
    h_hi: float
    s_lo: float
    s_hi: float
    v_lo: float
    v_hi: float

    def __post_init__(self):
        if self.s_lo > self.s_hi:
            raise ValueError("s_lo must be <= s_hi")
        if self.v_lo > self.v_hi:
            raise ValueError("v_lo must be <= v_hi")

    def mask_of(self, hsv: np.ndarray) -> np.ndarray:
        """Boolean membership map for an (..., 3) HSV array."""
        h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
        if self.h_lo <= self.h_hi:
            hue_ok = (h >= self.h_lo) & (h <= self.h_hi)
        else:
            hue_ok = (h >= self.h_lo) | (h <= self.h_hi)
        return (
            hue_ok
            & (s >= self.s_lo)
            & (s <= self.s_hi)
            & (v >= self.v_lo)
            & (v <= self.v_hi)
        )


def crop_roi(frame: RgbImage, roi: Roi) -> RgbImage:
    """Extract the ROI rectangle from a frame."""
    if roi.x + roi.width > frame.width or roi.y + roi.height > frame.height:
        raise RoiOutOfBounds(
            f"roi {roi} exceeds frame {frame.width}x{frame.height}"
        )
    return RgbImage(frame.pixels[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width])


def rgb_to_hsv_array(pixels) -> np.ndarray:
    """Vectorized hexcone RGB -> HSV over an (..., 3) uint8 array or RgbImage.

    Returns float64 with h in degrees [0, 360) and s, v in [0, 1].
    """
    if isinstance(pixels, RgbImage):
        pixels = pixels.pixels
    rgb = np.asarray(pixels, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.max(rgb, axis=-1)
    mn = np.min(rgb, axis=-1)
    delta = mx - mn

    v = mx / 255.0
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(delta > 0, delta, 1.0)
        h = np.select(
            [delta == 0, mx == r, mx == g],
            [0.0, (60.0 * ((g - b) / safe)) % 360.0, 60.0 * ((b - r) / safe) + 120.0],
            default=60.0 * ((r - g) / safe) + 240.0,
        )
    return np.stack([h, s, v], axis=-1)


def rgb_to_hsv(rgb: tuple[int, int, int]) -> HsvPixel:
    """Convert one 8-bit RGB triple to an HsvPixel."""
    out = rgb_to_hsv_array(np.asarray(rgb, dtype=np.uint8).reshape(1, 3))[0]
    return HsvPixel(h=float(out[0]), s=float(out[1]), v=float(out[2]))


def to_grayscale(img: RgbImage) -> GrayImage:
    """BT.601 luma, rounded half-up; exact in fixed-point arithmetic."""
    p = img.pixels.astype(np.int64)
    gray = (299 * p[..., 0] + 587 * p[..., 1] + 114 * p[..., 2] + 500) // 1000
    return GrayImage(gray.astype(np.uint8))


def hsv_in_range(p: HsvPixel, r: HsvRange) -> bool:
    """Inclusive membership test with hue wraparound."""
    return bool(r.mask_of(np.array([[p.h, p.s, p.v]]))[0])


def read_png(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def write_png(img: RgbImage, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def decode_png(data: bytes) -> RgbImage:
    with Image.open(io.BytesIO(data)) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def encode_png(img: RgbImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
