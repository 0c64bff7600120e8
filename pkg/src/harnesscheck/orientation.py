"""Connector polarity verification.

Two strategies, chosen per view: visually distinct connectors are compared to
a trained reference embedding by cosine similarity; symmetric connectors rely
on a colored marker sticker that is only visible in the correct orientation.

The embedding extractor is an interface so a learned model can replace the
default without touching callers; profiles record the extractor version and
are rejected when it changes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol, Union, runtime_checkable

import numpy as np

from .errors import EmptyPatch, RoiOutOfBounds, ZeroVector
from .imaging import HsvRange, RgbImage, Roi, crop_roi, rgb_to_hsv_array, to_grayscale

DEFAULT_SIMILARITY_THRESHOLD = 0.85
DEFAULT_MIN_AREA_FRAC = 0.02
THRESHOLD_CLAMP = (0.6, 0.95)

# Green marker sticker default, per the typical shop-floor convention; kept
# configurable because harnesses may carry green wires of their own.
DEFAULT_MARKER_RANGE = HsvRange(h_lo=100.0, h_hi=150.0, s_lo=0.5, s_hi=1.0, v_lo=0.4, v_hi=1.0)

_NORM_EPS = 1e-12


class OrientationVerdict(Enum):
    CORRECT = "Correct"
    REVERSED = "Reversed"
    UNCLEAR = "Unclear"


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length descriptor with its magnitude cached at construction."""

    values: np.ndarray
    l2_norm: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"embedding must be 1-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "l2_norm", float(np.linalg.norm(arr)))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class Distinct:
    """Orientation by embedding similarity against a trained reference."""

    connector_roi: Roi
    reference: Optional[EmbeddingVector] = None
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class Symmetric:
    """Orientation by marker visibility inside a fixed region."""

    marker_roi: Roi
    marker_range: HsvRange
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC

    def __post_init__(self):
        if not 0.0 < self.min_area_frac < 1.0:
            raise ValueError("min_area_frac must lie in (0, 1)")


OrientationSpec = Union[Distinct, Symmetric]


@runtime_checkable
class EmbeddingExtractor(Protocol):
    version: str
    length: int

    def extract(self, patch: RgbImage) -> EmbeddingVector: ...


class HistGradExtractor:
    """Default descriptor: spatial hue and gradient-orientation histograms.

    A 4x4 grid of 8-bin hue histograms weighted by saturation, concatenated
    with a 4x4 grid of 8-bin gradient-orientation histograms weighted by
    gradient magnitude, L2-normalized. Length 2*4*4*8 = 256.
    """

    version = "histgrad-256-v1"
    grid = 4
    bins = 8
    length = 2 * grid * grid * bins

    def extract(self, patch: RgbImage) -> EmbeddingVector:
        if patch.width < 1 or patch.height < 1:
            raise EmptyPatch("cannot embed an empty patch")
        hue_part = self._hue_histograms(patch)
        grad_part = self._gradient_histograms(patch)
        vec = np.concatenate([hue_part, grad_part])
        norm = np.linalg.norm(vec)
        if norm > _NORM_EPS:
            vec = vec / norm
        return EmbeddingVector(vec)

    def _cell_slices(self, size: int) -> list[slice]:
        edges = np.linspace(0, size, self.grid + 1).round().astype(int)
        return [slice(edges[i], edges[i + 1]) for i in range(self.grid)]

    def _hue_histograms(self, patch: RgbImage) -> np.ndarray:
        hsv = rgb_to_hsv_array(patch)
        bin_idx = np.minimum((hsv[:, :, 0] / 360.0 * self.bins).astype(int), self.bins - 1)
        weights = hsv[:, :, 1]
        return self._accumulate(bin_idx, weights, patch.height, patch.width)

    def _gradient_histograms(self, patch: RgbImage) -> np.ndarray:
        gray = to_grayscale(patch).data.astype(np.float64)
        if gray.shape[0] < 2 or gray.shape[1] < 2:
            return np.zeros(self.grid * self.grid * self.bins)
        gy, gx = np.gradient(gray)
        mag = np.hypot(gx, gy)
        theta = np.arctan2(gy, gx)  # [-pi, pi]
        bin_idx = np.minimum(
            ((theta + math.pi) / (2.0 * math.pi) * self.bins).astype(int), self.bins - 1
        )
        return self._accumulate(bin_idx, mag, patch.height, patch.width)

    def _accumulate(
        self, bin_idx: np.ndarray, weights: np.ndarray, height: int, width: int
    ) -> np.ndarray:
        out = np.zeros((self.grid, self.grid, self.bins))
        for r, rs in enumerate(self._cell_slices(height)):
            for c, cs in enumerate(self._cell_slices(width)):
                hist = np.bincount(
                    bin_idx[rs, cs].ravel(),
                    weights=weights[rs, cs].ravel(),
                    minlength=self.bins,
                )
                out[r, c] = hist[: self.bins]
        return out.ravel()


DEFAULT_EXTRACTOR = HistGradExtractor()


def extract_embedding(
    patch: RgbImage, extractor: EmbeddingExtractor = DEFAULT_EXTRACTOR
) -> EmbeddingVector:
    return extractor.extract(patch)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.l2_norm <= _NORM_EPS or b.l2_norm <= _NORM_EPS:
        raise ZeroVector("cosine similarity undefined for zero-magnitude embeddings")
    if len(a) != len(b):
        raise ValueError(f"embedding lengths differ: {len(a)} vs {len(b)}")
    sim = float(np.dot(a.values, b.values) / (a.l2_norm * b.l2_norm))
    return max(-1.0, min(1.0, sim))


def detect_marker(frame: RgbImage, spec: Symmetric) -> bool:
    """True iff enough of the marker region falls inside the marker color range."""
    region = crop_roi(frame, spec.marker_roi)
    hsv = rgb_to_hsv_array(region)
    hits = spec.marker_range.mask_of(hsv)
    frac = float(hits.mean())
    return frac >= spec.min_area_frac


def calibrated_threshold(sim_correct: float, sim_reversed: float) -> float:
    """Midpoint between same-orientation and flipped-orientation similarity."""
    if sim_correct <= sim_reversed:
        raise ValueError(
            "correct-orientation similarity must exceed reversed-orientation "
            f"similarity, got {sim_correct} <= {sim_reversed}"
        )
    lo, hi = THRESHOLD_CLAMP
    return max(lo, min(hi, (sim_correct + sim_reversed) / 2.0))


def verify_orientation(
    frame: RgbImage,
    spec: OrientationSpec,
    extractor: EmbeddingExtractor = DEFAULT_EXTRACTOR,
) -> OrientationVerdict:
    """Correct/Reversed per the configured strategy; Unclear when undecidable."""
    if isinstance(spec, Distinct):
        if spec.reference is None:
            return OrientationVerdict.UNCLEAR
        try:
            patch = crop_roi(frame, spec.connector_roi)
            emb = extract_embedding(patch, extractor)
            sim = cosine_similarity(emb, spec.reference)
        except (RoiOutOfBounds, EmptyPatch, ZeroVector):
            return OrientationVerdict.UNCLEAR
        if sim >= spec.similarity_threshold:
            return OrientationVerdict.CORRECT
        return OrientationVerdict.REVERSED
    try:
        return (
            OrientationVerdict.CORRECT
            if detect_marker(frame, spec)
            else OrientationVerdict.REVERSED
        )
    except RoiOutOfBounds:
        return OrientationVerdict.UNCLEAR
