"""Gradient-based boundary recovery for closely spaced wires.

When adjacent wires touch, the background mask has no pixels between them.
This module finds candidate boundary columns from thresholded x-gradients,
confirms each candidate against near-vertical line templates, and stamps the
accepted lines into a gradient mask that is combined with the background mask.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ImageTooNarrow, ShapeMismatch
from .imaging import BinaryMask, GrayImage

# Total horizontal drift (px) across the crop height of each default template.
DEFAULT_TEMPLATE_DRIFTS = (0, 2, -2, 4, -4, 8, -8)

OVERLAP_ACCEPT = 0.90


@dataclass(frozen=True)
class GradientConfig:
    grad_threshold: int = 30
    sum_threshold_frac: float = 0.3
    seg_min_width: int = 1
    seg_max_width: Optional[int] = None  # None: half the nominal wire pitch at use
    template_width: int = 17
    template_thickness: int = 1
    template_drifts: tuple[int, ...] = DEFAULT_TEMPLATE_DRIFTS
    overlap_accept: float = OVERLAP_ACCEPT
    combine_mode: Literal["or", "and"] = "or"

    def __post_init__(self):
        if not 0 < self.sum_threshold_frac <= 1:
            raise ValueError("sum_threshold_frac must be in (0, 1]")
        if self.template_width < 3 or self.template_width % 2 == 0:
            raise ValueError("template_width must be odd and >= 3")
        if self.overlap_accept != OVERLAP_ACCEPT:
            raise ValueError("overlap_accept is fixed at 0.90")
        if self.combine_mode not in ("or", "and"):
            raise ValueError("combine_mode must be 'or' or 'and'")
        if self.seg_min_width < 1:
            raise ValueError("seg_min_width must be >= 1")

    def resolved(self, crop_width: int, expected_wires: int) -> "GradientConfig":
        """Fill seg_max_width from the nominal wire pitch when unset."""
        if self.seg_max_width is not None:
            return self
        pitch = crop_width / max(expected_wires, 1)
        return dataclasses.replace(
            self, seg_max_width=max(self.seg_min_width, round(pitch / 2))
        )


@dataclass(frozen=True, eq=False)
class LineTemplate:
    """Binary (height x width) stencil with a centered line of fixed slope."""

    id: str
    cells: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.cells, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("template cells must be 2-D")
        object.__setattr__(self, "cells", arr)
        arr.setflags(write=False)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def ones(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class SegmentCandidate:
    """One run of above-threshold columns in the vertically summed gradient."""

    x_start: int  # inclusive
    x_end: int  # inclusive
    peak_x: int

    def __post_init__(self):
        if not self.x_start <= self.peak_x <= self.x_end:
            raise ValueError("peak_x must lie within the segment")

    @property
    def width(self) -> int:
        return self.x_end - self.x_start + 1


@dataclass(frozen=True)
class TemplateMatch:
    segment: SegmentCandidate
    template: LineTemplate
    overlap: float

    @property
    def template_id(self) -> str:
        return self.template.id


def make_line_template(
    height: int, width: int, drift: int, thickness: int = 1
) -> LineTemplate:
    """Build a line of `thickness` ones per row, drifting `drift` px over the height."""
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    cells = np.zeros((height, width), dtype=np.uint8)
    center = width // 2
    for y in range(height):
        frac = 0.5 if height == 1 else y / (height - 1)
        col = center + round(drift * (frac - 0.5)) - (thickness - 1) // 2
        if col < 0 or col + thickness > width:
            raise ValueError(
                f"drift {drift} with thickness {thickness} exceeds template width {width}"
            )
        cells[y, col : col + thickness] = 1
    label = f"{drift:+d}" if drift else "0"
    return LineTemplate(id=label, cells=cells)


def default_templates(height: int, cfg: GradientConfig) -> list[LineTemplate]:
    return [
        make_line_template(height, cfg.template_width, drift, cfg.template_thickness)
        for drift in cfg.template_drifts
    ]


def x_gradient(gray: GrayImage) -> np.ndarray:
    """Signed column differences: out[y][x] = gray[y][x+1] - gray[y][x]."""
    if gray.width < 2:
        raise ImageTooNarrow("x-gradient needs at least 2 columns")
    data = gray.data.astype(np.int16)
    return data[:, 1:] - data[:, :-1]


def threshold_gradient(grad: np.ndarray, t: int) -> np.ndarray:
    """Binary map: 1 where |grad| >= t (inclusive), else 0."""
    return (np.abs(grad) >= t).astype(np.uint8)


def vertical_sum(binmap: np.ndarray) -> np.ndarray:
    """Per-column count of 1s; shape (columns,)."""
    return np.asarray(binmap, dtype=np.int64).sum(axis=0)


def find_segments(
    sums: np.ndarray, height: int, cfg: GradientConfig
) -> list[SegmentCandidate]:
    """Maximal runs of columns with sums strictly above sum_threshold_frac * height.

    Runs outside [seg_min_width, seg_max_width] are dropped; peak_x is the
    leftmost maximum within the run.
    """
    sums = np.asarray(sums)
    threshold = cfg.sum_threshold_frac * height
    above = sums > threshold
    segments: list[SegmentCandidate] = []
    x = 0
    n = len(sums)
    while x < n:
        if not above[x]:
            x += 1
            continue
        start = x
        while x < n and above[x]:
            x += 1
        end = x - 1
        width = end - start + 1
        if width < cfg.seg_min_width:
            continue
        if cfg.seg_max_width is not None and width > cfg.seg_max_width:
            continue
        peak = start + int(np.argmax(sums[start : end + 1]))
        segments.append(SegmentCandidate(x_start=start, x_end=end, peak_x=peak))
    return segments


def _crop_around(binmap: np.ndarray, center: int, width: int) -> np.ndarray:
    """Columns [center - width//2, center + width//2] of the map, zero-padded."""
    n_rows, n_cols = binmap.shape
    half = width // 2
    out = np.zeros((n_rows, width), dtype=np.uint8)
    lo = center - half
    src_lo = max(lo, 0)
    src_hi = min(lo + width, n_cols)
    if src_lo < src_hi:
        out[:, src_lo - lo : src_hi - lo] = binmap[:, src_lo:src_hi]
    return out


def match_template(
    binmap: np.ndarray,
    seg: SegmentCandidate,
    templates: Sequence[LineTemplate],
    cfg: GradientConfig,
) -> Optional[TemplateMatch]:
    """Best template whose AND-overlap with the crop at peak_x exceeds 90%.

    overlap = |AND(template, crop)| / |template|. Returns None when no template
    exceeds the acceptance fraction (0.90 exactly is rejected).
    """
    if not templates:
        return None
    heights = {t.height for t in templates}
    widths = {t.width for t in templates}
    if heights != {binmap.shape[0]} or widths != {cfg.template_width}:
        raise ShapeMismatch("templates must match the map height and configured width")
    crop = _crop_around(binmap, seg.peak_x, cfg.template_width)
    best: Optional[TemplateMatch] = None
    for template in templates:
        hits = int(np.logical_and(template.cells, crop).sum())
        overlap = hits / template.ones
        if best is None or overlap > best.overlap:
            best = TemplateMatch(segment=seg, template=template, overlap=overlap)
    if best is None or best.overlap <= cfg.overlap_accept:
        return None
    return best


def build_gradient_mask(
    matches: Sequence[TemplateMatch], shape: tuple[int, int]
) -> BinaryMask:
    """Stamp each matched template (as 255) centered at its segment's peak_x."""
    height, width = shape
    mask = np.zeros((height, width), dtype=np.uint8)
    for match in matches:
        tmpl = match.template
        lo = match.segment.peak_x - tmpl.width // 2
        src_lo = max(lo, 0)
        src_hi = min(lo + tmpl.width, width)
        if src_lo >= src_hi:
            continue
        window = tmpl.cells[:, src_lo - lo : src_hi - lo]
        mask[:, src_lo:src_hi] |= window * np.uint8(255)
    return BinaryMask(mask)


def combine_masks(background: BinaryMask, gradient: BinaryMask, mode: str) -> BinaryMask:
    """Pointwise OR (default; lines become separators) or AND of the two masks."""
    if background.data.shape != gradient.data.shape:
        raise ShapeMismatch(
            f"mask shapes differ: {background.data.shape} vs {gradient.data.shape}"
        )
    if mode == "or":
        return BinaryMask(background.data | gradient.data)
    if mode == "and":
        return BinaryMask(background.data & gradient.data)
    raise ValueError(f"unknown combine mode {mode!r}")
