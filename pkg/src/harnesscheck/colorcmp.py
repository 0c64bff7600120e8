"""Reference color statistics and dual-space MSE verdicts.

Wire patches are resampled to a canonical size so pixel-wise statistics line
up across samples, then compared in RGB and HSV simultaneously. Hue is treated
as a circular quantity everywhere: averaged via unit vectors and differenced
via wraparound distance.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateBox,
    RoiOutOfBounds,
    SampleCountTooLow,
    ShapeMismatch,
    WireCountInconsistent,
)
from .imaging import RgbImage, rgb_to_hsv_array
from .segmentation import WireBox

CANONICAL_PATCH_WIDTH = 16
CANONICAL_PATCH_HEIGHT = 64
MIN_TRAINING_SAMPLES = 5

MSE_FLOOR_RGB = 25.0
MSE_FLOOR_HSV = 0.0025

_ZERO_VECTOR_EPS = 1e-9


class WireVerdict(enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    UNCLEAR = "Unclear"


@dataclass(frozen=True)
class ReferencePatch:
    """Per-pixel mean color of one wire across the training samples.

    mean_rgb holds 8-bit-scale floats; mean_hsv holds normalized floats with
    h mapped to [0,1) as h/360. hue_low_confidence marks wires whose circular
    hue mean degenerated (opposing hues cancelled), so hue distances for that
    wire carry little signal.
    """

    wire_index: int
    mean_rgb: np.ndarray
    mean_hsv: np.ndarray
    hue_low_confidence: bool = False

    def __post_init__(self):
        rgb = np.asarray(self.mean_rgb, dtype=np.float64)
        hsv = np.asarray(self.mean_hsv, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"mean_rgb expects (h, w, 3), got {rgb.shape}")
        if hsv.shape != rgb.shape:
            raise ShapeMismatch(f"mean_hsv shape {hsv.shape} != mean_rgb {rgb.shape}")
        if hsv.min() < 0.0 or hsv.max() > 1.0:
            raise ValueError("mean_hsv components must lie in [0, 1]")
        rgb = rgb.copy()
        hsv = hsv.copy()
        rgb.setflags(write=False)
        hsv.setflags(write=False)
        object.__setattr__(self, "mean_rgb", rgb)
        object.__setattr__(self, "mean_hsv", hsv)

    @property
    def height(self) -> int:
        return self.mean_rgb.shape[0]

    @property
    def width(self) -> int:
        return self.mean_rgb.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferencePatch):
            return NotImplemented
        return (
            self.wire_index == other.wire_index
            and self.hue_low_confidence == other.hue_low_confidence
            and np.array_equal(self.mean_rgb, other.mean_rgb)
            and np.array_equal(self.mean_hsv, other.mean_hsv)
        )

    def __hash__(self):
        return hash((self.wire_index, self.mean_rgb.tobytes()))


@dataclass(frozen=True)
class ColorScore:
    """Squared error of one wire against its reference, in both spaces."""

    wire_index: int
    mse_rgb: float
    mse_hsv: float

    def __post_init__(self):
        if self.mse_rgb < 0 or self.mse_hsv < 0:
            raise ValueError("MSE values must be non-negative")


@dataclass(frozen=True)
class Thresholds:
    """Match/Mismatch cut points per color space; between them lies Unclear."""

    t_match_rgb: float
    t_mismatch_rgb: float
    t_match_hsv: float
    t_mismatch_hsv: float

    def __post_init__(self):
        if not self.t_match_rgb < self.t_mismatch_rgb:
            raise ValueError("t_match_rgb must be < t_mismatch_rgb")
        if not self.t_match_hsv < self.t_mismatch_hsv:
            raise ValueError("t_match_hsv must be < t_mismatch_hsv")


def resample_patch(
    cropped: RgbImage,
    box: WireBox,
    out_width: int = CANONICAL_PATCH_WIDTH,
    out_height: int = CANONICAL_PATCH_HEIGHT,
) -> RgbImage:
    """Nearest-neighbor resample of the box region to the canonical size."""
    if out_width < 1 or out_height < 1:
        raise DegenerateBox("canonical size must be at least 1x1")
    if box.x_left < 0 or box.y_top < 0:
        raise RoiOutOfBounds(f"box {box} extends past the image origin")
    if box.x_right > cropped.width or box.y_bottom > cropped.height - 1:
        raise RoiOutOfBounds(f"box {box} exceeds image {cropped.width}x{cropped.height}")
    src_w = box.width
    src_h = box.height
    # Center-of-cell mapping; reduces to the identity when sizes already match.
    cols = box.x_left + ((np.arange(out_width) + 0.5) * src_w / out_width).astype(int)
    rows = box.y_top + ((np.arange(out_height) + 0.5) * src_h / out_height).astype(int)
    return RgbImage(cropped.pixels[np.ix_(rows, cols)])


def _hsv_normalized(patch: RgbImage) -> np.ndarray:
    hsv = rgb_to_hsv_array(patch)
    out = hsv.copy()
    out[:, :, 0] /= 360.0
    return out


def _mean_arrays(patches: Sequence[RgbImage]) -> tuple[np.ndarray, np.ndarray, bool]:
    """Pixel-wise mean in RGB plus circular-hue mean in HSV."""
    rgb_stack = np.stack([p.pixels.astype(np.float64) for p in patches])
    hsv_stack = np.stack([_hsv_normalized(p) for p in patches])
    mean_rgb = rgb_stack.mean(axis=0)

    angles = hsv_stack[:, :, :, 0] * (2.0 * math.pi)
    ux = np.cos(angles).mean(axis=0)
    uy = np.sin(angles).mean(axis=0)
    norm = np.hypot(ux, uy)
    degenerate = norm < _ZERO_VECTOR_EPS
    mean_h = np.where(degenerate, 0.0, np.arctan2(uy, ux) / (2.0 * math.pi))
    mean_h = np.mod(mean_h, 1.0)

    mean_hsv = np.empty_like(mean_rgb)
    mean_hsv[:, :, 0] = mean_h
    mean_hsv[:, :, 1] = hsv_stack[:, :, :, 1].mean(axis=0)
    mean_hsv[:, :, 2] = hsv_stack[:, :, :, 2].mean(axis=0)
    return mean_rgb, mean_hsv, bool(degenerate.any())


def mean_patches(
    samples: Sequence[tuple[RgbImage, Sequence[WireBox]]],
    out_width: int = CANONICAL_PATCH_WIDTH,
    out_height: int = CANONICAL_PATCH_HEIGHT,
) -> list[ReferencePatch]:
    """Per-wire reference statistics averaged over ≥5 training samples."""
    if len(samples) < MIN_TRAINING_SAMPLES:
        raise SampleCountTooLow(len(samples))
    wire_counts = {len(boxes) for _, boxes in samples}
    if len(wire_counts) != 1:
        raise WireCountInconsistent(f"samples disagree on wire count: {sorted(wire_counts)}")
    n_wires = wire_counts.pop()
    references = []
    for w in range(n_wires):
        patches = [
            resample_patch(image, boxes[w], out_width, out_height)
            for image, boxes in samples
        ]
        mean_rgb, mean_hsv, low_conf = _mean_arrays(patches)
        references.append(
            ReferencePatch(
                wire_index=w,
                mean_rgb=mean_rgb,
                mean_hsv=mean_hsv,
                hue_low_confidence=low_conf,
            )
        )
    return references


def _mse_rgb_arrays(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.mean(diff * diff))


def _mse_hsv_arrays(a: np.ndarray, b: np.ndarray) -> float:
    dh = np.abs(a[:, :, 0] - b[:, :, 0])
    dh = np.minimum(dh, 1.0 - dh)
    ds = a[:, :, 1] - b[:, :, 1]
    dv = a[:, :, 2] - b[:, :, 2]
    return float(np.mean(dh * dh + ds * ds + dv * dv) / 3.0)


def mse_rgb(test: RgbImage, ref: ReferencePatch) -> float:
    """Mean over all pixels and channels of squared 8-bit differences."""
    if (test.height, test.width) != (ref.height, ref.width):
        raise ShapeMismatch(
            f"patch {test.height}x{test.width} vs reference {ref.height}x{ref.width}"
        )
    return _mse_rgb_arrays(test.pixels.astype(np.float64), ref.mean_rgb)


def mse_hsv(test: RgbImage, ref: ReferencePatch) -> float:
    """Mean squared (Δh, Δs, Δv) with circular Δh on the normalized scale."""
    if (test.height, test.width) != (ref.height, ref.width):
        raise ShapeMismatch(
            f"patch {test.height}x{test.width} vs reference {ref.height}x{ref.width}"
        )
    return _mse_hsv_arrays(_hsv_normalized(test), ref.mean_hsv)


def score_wire(test: RgbImage, ref: ReferencePatch) -> ColorScore:
    return ColorScore(
        wire_index=ref.wire_index, mse_rgb=mse_rgb(test, ref), mse_hsv=mse_hsv(test, ref)
    )


def _space_verdict(mse: float, t_match: float, t_mismatch: float) -> WireVerdict:
    if mse <= t_match:
        return WireVerdict.MATCH
    if mse >= t_mismatch:
        return WireVerdict.MISMATCH
    return WireVerdict.UNCLEAR


def classify_wire(score: ColorScore, th: Thresholds) -> WireVerdict:
    """Match iff both spaces match; any single-space mismatch wins."""
    rgb = _space_verdict(score.mse_rgb, th.t_match_rgb, th.t_mismatch_rgb)
    hsv = _space_verdict(score.mse_hsv, th.t_match_hsv, th.t_mismatch_hsv)
    if WireVerdict.MISMATCH in (rgb, hsv):
        return WireVerdict.MISMATCH
    if rgb is WireVerdict.MATCH and hsv is WireVerdict.MATCH:
        return WireVerdict.MATCH
    return WireVerdict.UNCLEAR


def widen_for_low_confidence_hue(th: Thresholds) -> Thresholds:
    """Double the HSV match threshold for wires whose reference hue is unreliable.

    Safe by construction: calibration guarantees t_mismatch_hsv ≥ 4·t_match_hsv.
    """
    return replace(th, t_match_hsv=2.0 * th.t_match_hsv)


def calibrate_thresholds(patches_per_wire: Sequence[Sequence[RgbImage]]) -> Thresholds:
    """Derive cut points from leave-one-out training spread plus inter-wire contrast.

    t_match = μ_loo + 3σ_loo + floor per space, pooled across wires. t_mismatch
    is the larger of 4·t_match and half the minimum pairwise reference MSE
    between distinct wires; pairs whose reference colors are effectively
    identical (pairwise MSE at or below the floor) are excluded from that
    minimum, since color alone cannot separate them.
    """
    if not patches_per_wire:
        raise SampleCountTooLow(0)
    loo_rgb: list[float] = []
    loo_hsv: list[float] = []
    full_refs: list[tuple[np.ndarray, np.ndarray]] = []
    for patches in patches_per_wire:
        k = len(patches)
        if k < MIN_TRAINING_SAMPLES:
            raise SampleCountTooLow(k)
        for i in range(k):
            others = [p for j, p in enumerate(patches) if j != i]
            ref_rgb, ref_hsv, _ = _mean_arrays(others)
            loo_rgb.append(_mse_rgb_arrays(patches[i].pixels.astype(np.float64), ref_rgb))
            loo_hsv.append(_mse_hsv_arrays(_hsv_normalized(patches[i]), ref_hsv))
        mean_rgb, mean_hsv, _ = _mean_arrays(patches)
        full_refs.append((mean_rgb, mean_hsv))

    t_match_rgb = float(np.mean(loo_rgb) + 3.0 * np.std(loo_rgb) + MSE_FLOOR_RGB)
    t_match_hsv = float(np.mean(loo_hsv) + 3.0 * np.std(loo_hsv) + MSE_FLOOR_HSV)

    inter_rgb: list[float] = []
    inter_hsv: list[float] = []
    for i in range(len(full_refs)):
        for j in range(i + 1, len(full_refs)):
            d_rgb = _mse_rgb_arrays(full_refs[i][0], full_refs[j][0])
            d_hsv = _mse_hsv_arrays(full_refs[i][1], full_refs[j][1])
            if d_rgb > MSE_FLOOR_RGB:
                inter_rgb.append(d_rgb)
            if d_hsv > MSE_FLOOR_HSV:
                inter_hsv.append(d_hsv)

    t_mismatch_rgb = max(4.0 * t_match_rgb, min(inter_rgb) / 2.0 if inter_rgb else 0.0)
    t_mismatch_hsv = max(4.0 * t_match_hsv, min(inter_hsv) / 2.0 if inter_hsv else 0.0)
    return Thresholds(
        t_match_rgb=t_match_rgb,
        t_mismatch_rgb=t_mismatch_rgb,
        t_match_hsv=t_match_hsv,
        t_mismatch_hsv=t_mismatch_hsv,
    )
