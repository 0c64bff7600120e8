"""Deterministic synthetic harness renderer with analytic ground truth.

Renders roughly vertical solid-color wires over a green background, with
optional per-pixel Gaussian noise, printed-text glyphs, bright reflection
bands, and connector art (a keyed/tinted bar or a symmetric bar with an
optional green marker sticker). Every stochastic effect flows from the spec's
seed, so identical specs render byte-identical frames.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IndexOutOfRange, SpecInvalid
from .imaging import BinaryMask, RgbImage, Roi
from .orientation import DEFAULT_MARKER_RANGE  # noqa: F401  (re-export for corpus tooling)
from .segmentation import DEFAULT_BG_RANGE, WireBox  # noqa: F401

# Wire palette ordered so adjacent wires always differ strongly in luma,
# keeping boundaries visible to the x-gradient when wires touch.
CORPUS_PALETTE_8 = (
    (20, 20, 120),   # navy
    (250, 230, 40),  # yellow
    (220, 30, 30),   # red
    (245, 150, 20),  # orange
    (30, 60, 220),   # blue
    (250, 150, 180), # pink
    (220, 30, 200),  # magenta
    (40, 220, 230),  # cyan
)

DEFAULT_BG_COLOR = (50, 170, 70)
DEFAULT_MARKER_COLOR = (30, 220, 60)

_BAR_COLOR = (130, 130, 135)
_NOTCH_COLOR = (40, 40, 45)
_TINT_COLOR = (200, 120, 40)
_BAR_HEIGHT = 24
_BAR_GAP = 10  # rows between bar bottom and the wire-field ROI

# 5x7 glyph bitmaps for printed-text artifacts.
_GLYPHS = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "W": ("10001", "10001", "10001", "10101", "10101", "11011", "10001"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
}


@dataclass(frozen=True)
class HarnessSpec:
    """Ground-truth description of one synthetic harness view."""

    wire_colors: tuple[tuple[int, int, int], ...]
    wire_width: int = 14
    gap: int = 4
    slants: Optional[tuple[int, ...]] = None  # px drift top->bottom, per wire
    wire_shifts: Optional[tuple[int, ...]] = None  # per-wire x offset (defects)
    bg_color: tuple[int, int, int] = DEFAULT_BG_COLOR
    noise_sigma: float = 0.0
    text_artifacts: bool = False
    reflection_bands: int = 0
    connector: Optional[str] = None  # "distinct-notch" | "symmetric"
    marker_side: str = "none"  # "front" | "back" | "none"
    connector_reversed: bool = False
    frame_width: int = 400
    frame_height: int = 240
    roi: Roi = field(default_factory=lambda: Roi(40, 60, 320, 150))
    lead_in: Optional[int] = None  # background margin before wire 0; None -> max(2, gap)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "wire_colors", tuple(tuple(c) for c in self.wire_colors))
        if self.slants is not None:
            object.__setattr__(self, "slants", tuple(self.slants))
        if self.wire_shifts is not None:
            object.__setattr__(self, "wire_shifts", tuple(self.wire_shifts))
        validate_spec(self)

    @property
    def wire_count(self) -> int:
        return len(self.wire_colors)

    def slant_of(self, i: int) -> int:
        return 0 if self.slants is None else self.slants[i]

    def shift_of(self, i: int) -> int:
        return 0 if self.wire_shifts is None else self.wire_shifts[i]

    @property
    def lead(self) -> int:
        return self.lead_in if self.lead_in is not None else max(2, self.gap)

    def wire_x(self, i: int, y: int) -> int:
        """Left column of wire i at crop row y."""
        base = self.lead + i * (self.wire_width + self.gap) + self.shift_of(i)
        denom = max(self.roi.height - 1, 1)
        return base + round(self.slant_of(i) * y / denom)

    def connector_bar(self) -> Roi:
        """Frame-coordinate rectangle of the connector bar art."""
        if self.connector is None:
            raise SpecInvalid("spec has no connector art")
        return Roi(
            x=self.roi.x,
            y=self.roi.y - _BAR_GAP - _BAR_HEIGHT,
            width=self.roi.width,
            height=_BAR_HEIGHT,
        )

    def marker_roi(self) -> Roi:
        """Left-end region of the bar where the marker sticker sits when visible."""
        bar = self.connector_bar()
        return Roi(x=bar.x, y=bar.y, width=min(60, bar.width), height=bar.height)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["roi"] = {"x": self.roi.x, "y": self.roi.y, "width": self.roi.width, "height": self.roi.height}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HarnessSpec":
        d = dict(d)
        d["wire_colors"] = tuple(tuple(c) for c in d["wire_colors"])
        for key in ("slants", "wire_shifts"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "bg_color" in d:
            d["bg_color"] = tuple(d["bg_color"])
        if "roi" in d and not isinstance(d["roi"], Roi):
            d["roi"] = Roi(**d["roi"])
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    """Analytic truth for one rendered frame, consistent by construction."""

    boxes: tuple[WireBox, ...]
    background_mask: BinaryMask  # crop-local, pre-noise geometry
    internal_boundaries_mid: tuple[int, ...]  # boundary columns at mid-height
    orientation_label: Optional[str]  # "correct" | "reversed" | None
    cropped: RgbImage  # byte-equal to crop_roi(frame, spec.roi)


def validate_spec(spec: HarnessSpec) -> None:
    if spec.wire_count < 1:
        raise SpecInvalid("at least one wire required")
    if spec.wire_width < 3:
        raise SpecInvalid("wire width must be >= 3 px")
    if spec.gap < 0:
        raise SpecInvalid("gap must be >= 0")
    if spec.slants is not None and len(spec.slants) != spec.wire_count:
        raise SpecInvalid("slants length must equal wire count")
    if spec.wire_shifts is not None and len(spec.wire_shifts) != spec.wire_count:
        raise SpecInvalid("wire_shifts length must equal wire count")
    if spec.noise_sigma < 0:
        raise SpecInvalid("noise_sigma must be >= 0")
    roi = spec.roi
    if roi.x + roi.width > spec.frame_width or roi.y + roi.height > spec.frame_height:
        raise SpecInvalid("roi exceeds frame bounds")
    if roi.height < 3:
        raise SpecInvalid("roi must be at least 3 rows tall")
    if spec.connector is not None:
        if spec.connector not in ("distinct-notch", "symmetric"):
            raise SpecInvalid(f"unknown connector art {spec.connector!r}")
        if roi.y < _BAR_GAP + _BAR_HEIGHT:
            raise SpecInvalid("roi.y leaves no room for the connector bar")
    if spec.marker_side not in ("front", "back", "none"):
        raise SpecInvalid(f"unknown marker side {spec.marker_side!r}")
    # Wires must keep >= 1 background column at both crop edges and must not
    # overlap, at every row (extents are linear in y, so rows 0 and H-1 suffice).
    for y in (0, roi.height - 1):
        prev_end = None
        for i in range(spec.wire_count):
            x = spec.wire_x(i, y)
            if x < 1:
                raise SpecInvalid(f"wire {i} leaves no left background margin at row {y}")
            if x + spec.wire_width > roi.width - 1:
                raise SpecInvalid(f"wire {i} leaves no right background margin at row {y}")
            if prev_end is not None and x < prev_end:
                raise SpecInvalid(f"wires {i-1} and {i} overlap at row {y}")
            prev_end = x + spec.wire_width


def _analytic_boxes(spec: HarnessSpec) -> tuple[WireBox, ...]:
    """max/min rule applied to the analytic edges at rows 0 and H-1."""
    y_max = spec.roi.height - 1
    boxes = []
    for i in range(spec.wire_count):
        top_start = spec.wire_x(i, 0)
        bot_start = spec.wire_x(i, y_max)
        boxes.append(
            WireBox(
                index=i,
                x_left=max(top_start, bot_start),
                x_right=min(top_start, bot_start) + spec.wire_width,
                y_top=0,
                y_bottom=y_max,
            )
        )
    return tuple(boxes)


def _render_crop(spec: HarnessSpec) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free wire field (H, W, 3) and its background mask (H, W)."""
    h, w = spec.roi.height, spec.roi.width
    crop = np.empty((h, w, 3), dtype=np.uint8)
    crop[:, :] = spec.bg_color
    mask = np.full((h, w), 255, dtype=np.uint8)
    ys = np.arange(h)
    cols_rel = np.arange(spec.wire_width)
    for i in range(spec.wire_count):
        denom = max(h - 1, 1)
        offs = np.round(spec.slant_of(i) * ys / denom).astype(int)
        base = spec.lead + i * (spec.wire_width + spec.gap) + spec.shift_of(i)
        cols = base + offs[:, None] + cols_rel[None, :]
        crop[ys[:, None], cols] = spec.wire_colors[i]
        mask[ys[:, None], cols] = 0
    return crop, mask


def _stamp_text(crop: np.ndarray, spec: HarnessSpec, rng: np.random.Generator) -> None:
    """Dark printed glyphs inside wire interiors (a known gradient stressor)."""
    h = crop.shape[0]
    glyphs = list(_GLYPHS.values())
    for i in range(spec.wire_count):
        if spec.wire_width < 9:
            continue
        n_glyphs = max(1, h // 40)
        for k in range(n_glyphs):
            glyph = glyphs[int(rng.integers(len(glyphs)))]
            gy = int(rng.integers(2, max(3, h - 9)))
            gx = spec.wire_x(i, gy) + (spec.wire_width - 5) // 2
            color = (np.asarray(spec.wire_colors[i], dtype=np.float64) * 0.35).astype(np.uint8)
            for ry, bits in enumerate(glyph):
                for rx, bit in enumerate(bits):
                    if bit == "1" and gy + ry < h:
                        crop[gy + ry, gx + rx] = color


def _stamp_reflections(crop: np.ndarray, spec: HarnessSpec, rng: np.random.Generator) -> None:
    """Additive bright vertical bands across the full crop height."""
    h, w = crop.shape[:2]
    profile = np.array([0.5, 1.0, 0.5])
    for _ in range(spec.reflection_bands):
        c = int(rng.integers(2, w - 2))
        band = crop[:, c - 1 : c + 2].astype(np.float64)
        band += 60.0 * profile[None, :, None]
        crop[:, c - 1 : c + 2] = np.clip(band, 0, 255).astype(np.uint8)


def _render_connector(frame: np.ndarray, spec: HarnessSpec) -> None:
    bar = spec.connector_bar()
    region = frame[bar.y : bar.y + bar.height, bar.x : bar.x + bar.width]
    region[:, :] = _BAR_COLOR
    if spec.connector == "distinct-notch":
        tint_w = max(1, round(bar.width * 0.4))
        notch_x0, notch_x1 = 6, 18
        if spec.connector_reversed:
            region[:, bar.width - tint_w :] = _TINT_COLOR
            region[6:18, bar.width - notch_x1 : bar.width - notch_x0] = _NOTCH_COLOR
        else:
            region[:, :tint_w] = _TINT_COLOR
            region[6:18, notch_x0:notch_x1] = _NOTCH_COLOR
    else:  # symmetric bar; marker sticker on the visible face only
        visible_face = "back" if spec.connector_reversed else "front"
        if spec.marker_side == visible_face:
            region[6:18, 8:20] = DEFAULT_MARKER_COLOR


def generate(spec: HarnessSpec) -> tuple[RgbImage, GroundTruth]:
    """Render one frame; all randomness derives from spec.seed."""
    rng = np.random.default_rng(spec.seed)
    crop, gt_mask = _render_crop(spec)
    if spec.text_artifacts:
        _stamp_text(crop, spec, rng)
    if spec.reflection_bands:
        _stamp_reflections(crop, spec, rng)

    frame = np.empty((spec.frame_height, spec.frame_width, 3), dtype=np.uint8)
    frame[:, :] = spec.bg_color
    roi = spec.roi
    frame[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width] = crop
    orientation_label: Optional[str] = None
    if spec.connector is not None:
        _render_connector(frame, spec)
        orientation_label = "reversed" if spec.connector_reversed else "correct"

    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=frame.shape)
        frame = np.clip(frame.astype(np.float64) + noise, 0, 255).round().astype(np.uint8)

    y_mid = (roi.height - 1) // 2
    boundaries = tuple(spec.wire_x(i + 1, y_mid) for i in range(spec.wire_count - 1))
    truth = GroundTruth(
        boxes=_analytic_boxes(spec),
        background_mask=BinaryMask(gt_mask),
        internal_boundaries_mid=boundaries,
        orientation_label=orientation_label,
        cropped=RgbImage(frame[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width]),
    )
    return RgbImage(frame), truth


def permute_defect(spec: HarnessSpec, kind: str, *args: int) -> HarnessSpec:
    """Return a new spec embodying one defect; the original is unchanged.

    Kinds: swap(i, j), reverse_connector, shift_wire(i, dx), drop_wire(i).
    """
    n = spec.wire_count

    def check(i: int) -> None:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"wire index {i} out of range for {n} wires")

    if kind == "swap":
        i, j = args
        check(i)
        check(j)
        colors = list(spec.wire_colors)
        colors[i], colors[j] = colors[j], colors[i]
        return dataclasses.replace(spec, wire_colors=tuple(colors))
    if kind == "reverse_connector":
        return dataclasses.replace(spec, connector_reversed=not spec.connector_reversed)
    if kind == "shift_wire":
        i, dx = args
        check(i)
        shifts = list(spec.wire_shifts or (0,) * n)
        shifts[i] += dx
        return dataclasses.replace(spec, wire_shifts=tuple(shifts))
    if kind == "drop_wire":
        (i,) = args
        check(i)
        colors = list(spec.wire_colors)
        del colors[i]
        slants = None
        if spec.slants is not None:
            slants = tuple(s for k, s in enumerate(spec.slants) if k != i)
        shifts = None
        if spec.wire_shifts is not None:
            shifts = tuple(s for k, s in enumerate(spec.wire_shifts) if k != i)
        return dataclasses.replace(
            spec, wire_colors=tuple(colors), slants=slants, wire_shifts=shifts
        )
    raise ValueError(f"unknown defect kind {kind!r}")
