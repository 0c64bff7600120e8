"""Wire segmentation: background masking, scan-line endpoints, bounding boxes.

The background path samples two primary scan rows (top and bottom of the
cropped frame) and falls back to inset rows only when a primary row yields
the wrong interval count. When both rows of a side fail, the caller is routed
to the gradient-boundary recovery path before giving up as Unclear.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import gradient as gradmod
from .errors import DegenerateBox, EndpointCountMismatch, MalformedAlternation
from .gradient import GradientConfig
from .imaging import BinaryMask, HsvRange, RgbImage, rgb_to_hsv_array, to_grayscale

Probe = Callable[[str, dict], None]

# Green-background default; tolerant of camera noise at sigma ~5 while
# excluding every common wire color family.
DEFAULT_BG_RANGE = HsvRange(h_lo=90.0, h_hi=150.0, s_lo=0.25, s_hi=1.0, v_lo=0.15, v_hi=0.95)


@dataclass(frozen=True)
class ScanLineConfig:
    """Row indices of the primary and fallback scan lines."""

    primary_top: int
    primary_bottom: int
    fallback_top: int
    fallback_bottom: int

    def __post_init__(self):
        if self.fallback_top <= self.primary_top:
            raise ValueError("fallback_top must be below primary_top")
        if self.fallback_bottom >= self.primary_bottom:
            raise ValueError("fallback_bottom must be above primary_bottom")

    @classmethod
    def for_height(cls, height: int) -> "ScanLineConfig":
        """Defaults: primaries at rows 0 and y_max, fallbacks at 0.1/0.9 of y_max."""
        if height < 3:
            raise ValueError("cropped frame must be at least 3 rows tall")
        y_max = height - 1
        return cls(
            primary_top=0,
            primary_bottom=y_max,
            fallback_top=max(1, round(0.1 * y_max)),
            fallback_bottom=min(y_max - 1, round(0.9 * y_max)),
        )

    def rows(self) -> tuple[int, int, int, int]:
        return (self.primary_top, self.primary_bottom, self.fallback_top, self.fallback_bottom)


@dataclass(frozen=True)
class EndpointRow:
    """Ordered half-open wire intervals found on one scan row."""

    y: int
    boundaries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "boundaries", tuple((int(s), int(e)) for s, e in self.boundaries)
        )
        prev_end = None
        for start, end in self.boundaries:
            if start >= end:
                raise ValueError(f"empty interval ({start}, {end})")
            if prev_end is not None and start < prev_end:
                raise ValueError("intervals must be disjoint and sorted")
            prev_end = end


@dataclass(frozen=True)
class WireBox:
    """Tight bounding box of one wire inside the cropped frame.

    Columns span the half-open range [x_left, x_right); rows span
    y_top..y_bottom inclusive (both are scan rows that were actually sampled).
    """

    index: int
    x_left: int
    x_right: int
    y_top: int
    y_bottom: int

    def __post_init__(self):
        if self.x_left >= self.x_right:
            raise DegenerateBox(
                f"wire {self.index}: x_left {self.x_left} >= x_right {self.x_right}"
            )
        if self.y_top >= self.y_bottom:
            raise DegenerateBox(
                f"wire {self.index}: y_top {self.y_top} >= y_bottom {self.y_bottom}"
            )

    @property
    def width(self) -> int:
        return self.x_right - self.x_left

    @property
    def height(self) -> int:
        return self.y_bottom - self.y_top + 1


class NeedsGradient:
    """Signal that both scan lines of a side failed on the background mask."""

    def __repr__(self) -> str:
        return "NeedsGradient()"


@dataclass(frozen=True)
class SegmentationUnclear:
    """Terminal outcome routing the frame to manual inspection."""

    reason: str


def background_mask(cropped: RgbImage, bg: HsvRange) -> BinaryMask:
    """255 where the pixel matches the background color range, 0 at wires."""
    hsv = rgb_to_hsv_array(cropped.pixels)
    return BinaryMask(np.where(bg.mask_of(hsv), 255, 0).astype(np.uint8))


def scan_line_endpoints(mask: BinaryMask, y: int, expected_wires: int) -> EndpointRow:
    """Extract wire intervals from one mask row via the shifted-difference rule.

    A -255 difference opens a wire interval, +255 closes it; rows that begin
    or end inside a wire contribute virtual boundaries at x=0 / x=width.
    """
    if expected_wires < 1:
        raise ValueError("expected_wires must be >= 1")
    if not 0 <= y < mask.height:
        raise ValueError(f"row {y} outside mask of height {mask.height}")
    row = mask.data[y].astype(np.int16)
    d = row[1:] - row[:-1]
    opens = list(np.flatnonzero(d == -255) + 1)
    closes = list(np.flatnonzero(d == 255) + 1)
    if row[0] == 0:
        opens.insert(0, 0)
    if row[-1] == 0:
        closes.append(mask.width)
    if len(opens) != len(closes) or any(o >= c for o, c in zip(opens, closes)):
        raise MalformedAlternation(f"row {y}: opens {opens} vs closes {closes}")
    if len(opens) != expected_wires:
        raise EndpointCountMismatch(len(opens), expected_wires, y=y)
    return EndpointRow(y=y, boundaries=tuple(zip(opens, closes)))


def detect_endpoints(
    mask: BinaryMask,
    cfg: ScanLineConfig,
    expected_wires: int,
    probe: Optional[Probe] = None,
) -> Union[tuple[EndpointRow, EndpointRow], NeedsGradient]:
    """Try primary scan rows, then fallbacks; NeedsGradient when a side fails both."""
    for row in cfg.rows():
        if not 0 <= row < mask.height:
            raise ValueError(f"scan row {row} outside mask of height {mask.height}")

    def first_success(rows: tuple[int, int], kind: str) -> Optional[EndpointRow]:
        for y in rows:
            if probe is not None:
                probe("scan_row", {"kind": kind, "y": y})
            try:
                return scan_line_endpoints(mask, y, expected_wires)
            except (EndpointCountMismatch, MalformedAlternation):
                continue
        return None

    top = first_success((cfg.primary_top, cfg.fallback_top), "top")
    bottom = first_success((cfg.primary_bottom, cfg.fallback_bottom), "bottom")
    if top is None or bottom is None:
        return NeedsGradient()
    return top, bottom


def bounding_boxes(top: EndpointRow, bottom: EndpointRow) -> tuple[WireBox, ...]:
    """Tighten each wire to max(left pair) / min(right pair); y spans the rows used."""
    if len(top.boundaries) != len(bottom.boundaries):
        raise ValueError(
            f"interval counts differ: {len(top.boundaries)} vs {len(bottom.boundaries)}"
        )
    boxes = []
    for i, ((ts, te), (bs, be)) in enumerate(zip(top.boundaries, bottom.boundaries)):
        boxes.append(
            WireBox(
                index=i,
                x_left=int(max(ts, bs)),
                x_right=int(min(te, be)),
                y_top=min(top.y, bottom.y),
                y_bottom=max(top.y, bottom.y),
            )
        )
    return tuple(boxes)


def _merge_stamped_gaps(row: EndpointRow, bg_mask: BinaryMask) -> EndpointRow:
    """Collapse interval gaps created by stamped boundary lines.

    A gap between consecutive intervals that is wire-valued (0) in the original
    background mask exists only because a gradient line was stamped there; both
    neighbors are snapped to the line's center column.
    """
    if len(row.boundaries) < 2:
        return row
    bg_row = bg_mask.data[row.y]
    spans = [list(b) for b in row.boundaries]
    for i in range(len(spans) - 1):
        gap_lo, gap_hi = spans[i][1], spans[i + 1][0]
        if gap_lo < gap_hi and not bg_row[gap_lo:gap_hi].any():
            center = (gap_lo + gap_hi) // 2
            spans[i][1] = center
            spans[i + 1][0] = center
    return EndpointRow(y=row.y, boundaries=tuple((s, e) for s, e in spans))


def segment_wires(
    cropped: RgbImage,
    bg: HsvRange,
    cfg: ScanLineConfig,
    expected_wires: int,
    gradient_cfg: GradientConfig,
    probe: Optional[Probe] = None,
) -> Union[list[WireBox], SegmentationUnclear]:
    """Full segmentation: background path, one gradient recovery, else Unclear."""
    bg_mask = background_mask(cropped, bg)
    got = detect_endpoints(bg_mask, cfg, expected_wires, probe)
    if isinstance(got, NeedsGradient):
        if probe is not None:
            probe("gradient", {})
        combined = _gradient_combined_mask(cropped, bg_mask, gradient_cfg, expected_wires)
        got = detect_endpoints(combined, cfg, expected_wires, probe)
        if isinstance(got, NeedsGradient):
            return SegmentationUnclear(
                reason="wire endpoints not found on background or combined masks"
            )
        top, bottom = got
        top = _merge_stamped_gaps(top, bg_mask)
        bottom = _merge_stamped_gaps(bottom, bg_mask)
    else:
        top, bottom = got
    try:
        return bounding_boxes(top, bottom)
    except DegenerateBox as exc:
        return SegmentationUnclear(reason=str(exc))


def _gradient_combined_mask(
    cropped: RgbImage,
    bg_mask: BinaryMask,
    cfg: GradientConfig,
    expected_wires: int,
) -> BinaryMask:
    """Steps 4.1-4.7: build the gradient mask and combine it with the background."""
    cfg = cfg.resolved(crop_width=cropped.width, expected_wires=expected_wires)
    gray = to_grayscale(cropped)
    grad = gradmod.x_gradient(gray)
    binmap = gradmod.threshold_gradient(grad, cfg.grad_threshold)
    sums = gradmod.vertical_sum(binmap)
    segments = gradmod.find_segments(sums, cropped.height, cfg)
    templates = gradmod.default_templates(cropped.height, cfg)
    matches = []
    for seg in segments:
        match = gradmod.match_template(binmap, seg, templates, cfg)
        if match is not None:
            matches.append(match)
    gmask = gradmod.build_gradient_mask(matches, (cropped.height, cropped.width))
    return gradmod.combine_masks(bg_mask, gmask, cfg.combine_mode)
