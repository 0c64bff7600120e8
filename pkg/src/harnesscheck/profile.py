"""Profile training, inspection, and profile persistence.

A TrainedProfile captures everything needed to inspect a harness type:
per-view segmentation settings, per-wire reference color statistics,
calibrated thresholds, and optional orientation references. Profiles are
immutable after training and serialize to a single checksummed JSON file,
so they can be stored once and reused across production runs.
"""
from __future__ import annotations

import base64
import dataclasses
import json
import uuid
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .colorcmp import (
    ColorScore,
    ReferencePatch,
    Thresholds,
    WireVerdict,
    calibrate_thresholds,
    mean_patches,
    resample_patch,
    score_wire,
    classify_wire,
    widen_for_low_confidence_hue,
)
from .errors import (
    CorruptProfile,
    FormatVersionUnsupported,
    ProfileVersionMismatch,
    RoiOutOfBounds,
    SampleCountTooLow,
    TrainingSampleUnclear,
    WireCountInconsistent,
)
from .gradient import GradientConfig
from .imaging import HsvRange, RgbImage, Roi, crop_roi
from .orientation import (
    DEFAULT_EXTRACTOR,
    DEFAULT_MARKER_RANGE,
    DEFAULT_MIN_AREA_FRAC,
    DEFAULT_SIMILARITY_THRESHOLD,
    Distinct,
    EmbeddingExtractor,
    EmbeddingVector,
    OrientationSpec,
    OrientationVerdict,
    Symmetric,
    calibrated_threshold,
    cosine_similarity,
    verify_orientation,
)
from .segmentation import (
    DEFAULT_BG_RANGE,
    ScanLineConfig,
    SegmentationUnclear,
    WireBox,
    segment_wires,
)

FORMAT_VERSION = "1"
MIN_SAMPLES = 5
DEFAULT_PATCH_INSET_FRAC = 0.15

UNCLEAR_MESSAGE = "Image not clear"


class Verdict(Enum):
    PASS = "Pass"
    FAIL = "Fail"
    UNCLEAR = "Unclear"


@dataclass(frozen=True)
class ViewSpec:
    """Static configuration for one camera view of the harness."""

    view_id: str
    roi: Roi
    expected_wires: int
    bg_range: HsvRange
    scan: ScanLineConfig
    gradient: GradientConfig = field(default_factory=GradientConfig)
    orientation: Optional[OrientationSpec] = None
    # Horizontal shrink applied to each wire box before patch resampling, so
    # boundary columns recovered within a pixel or two never leak neighbor
    # color into the patch statistics.
    patch_inset_frac: float = DEFAULT_PATCH_INSET_FRAC

    def __post_init__(self):
        if self.expected_wires < 1:
            raise ValueError("expected_wires must be >= 1")
        if not 0.0 <= self.patch_inset_frac <= 0.4:
            raise ValueError("patch_inset_frac must lie in [0, 0.4]")


@dataclass(frozen=True)
class TrainedProfile:
    profile_id: str
    harness_type: str
    format_version: str
    extractor_version: str
    views: tuple[ViewSpec, ...]
    references: tuple[tuple[ReferencePatch, ...], ...]  # [view][wire]
    thresholds: tuple[tuple[Thresholds, ...], ...]  # [view][wire]
    created_at: str
    sample_count: int
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sample_count < MIN_SAMPLES:
            raise SampleCountTooLow(self.sample_count)
        if not (len(self.views) == len(self.references) == len(self.thresholds)):
            raise ValueError("views, references, and thresholds must align")
        for view, refs, ths in zip(self.views, self.references, self.thresholds):
            if len(refs) != view.expected_wires or len(ths) != view.expected_wires:
                raise WireCountInconsistent(
                    f"view {view.view_id!r} expects {view.expected_wires} wires, "
                    f"got {len(refs)} references and {len(ths)} thresholds"
                )


@dataclass(frozen=True)
class WireReport:
    index: int
    verdict: WireVerdict
    score: ColorScore
    box: WireBox


@dataclass(frozen=True)
class ViewResult:
    view_id: str
    segmented: bool
    segmentation_reason: Optional[str]
    wires: tuple[WireReport, ...]
    orientation: Optional[OrientationVerdict]


@dataclass(frozen=True)
class InspectionResult:
    views: tuple[ViewResult, ...]
    overall: Verdict
    message: str


def overall_verdict(
    wire_verdicts: Sequence[WireVerdict],
    orientation_verdicts: Sequence[OrientationVerdict],
    segmentation_unclear: bool,
) -> Verdict:
    """Three-way combination rule over every per-wire and per-view outcome.

    Fail on any Mismatch or Reversed; otherwise Unclear when anything is
    undecided (including a view that failed to segment); otherwise Pass.
    """
    if any(v is WireVerdict.MISMATCH for v in wire_verdicts) or any(
        o is OrientationVerdict.REVERSED for o in orientation_verdicts
    ):
        return Verdict.FAIL
    if (
        segmentation_unclear
        or any(v is WireVerdict.UNCLEAR for v in wire_verdicts)
        or any(o is OrientationVerdict.UNCLEAR for o in orientation_verdicts)
    ):
        return Verdict.UNCLEAR
    return Verdict.PASS


def _inset_box(box: WireBox, frac: float) -> WireBox:
    inset = min(round(frac * box.width), (box.width - 1) // 2)
    if inset <= 0:
        return box
    return WireBox(
        index=box.index,
        x_left=box.x_left + inset,
        x_right=box.x_right - inset,
        y_top=box.y_top,
        y_bottom=box.y_bottom,
    )


def train(
    samples: Sequence[Sequence[RgbImage]],
    views: Sequence[ViewSpec],
    *,
    harness_type: str,
    profile_id: Optional[str] = None,
    extractor: EmbeddingExtractor = DEFAULT_EXTRACTOR,
    reversed_exemplars: Optional[dict[str, RgbImage]] = None,
    provenance: Sequence[str] = (),
    progress: Optional[Callable[[str, int, str], None]] = None,
) -> TrainedProfile:
    """Build a profile from ≥5 correct sample frames per view.

    samples[v][i] is sample frame i of view v. Every sample must segment
    cleanly; an unclear sample aborts training so the operator re-shoots it.
    When a reversed_exemplars frame is supplied for a Distinct-orientation
    view, the similarity threshold is calibrated from the data instead of
    using the default.
    """
    if len(samples) != len(views):
        raise ValueError(f"got {len(samples)} sample sets for {len(views)} views")
    counts = {len(s) for s in samples}
    if len(counts) != 1:
        raise ValueError(f"views disagree on sample count: {sorted(counts)}")
    sample_count = counts.pop()
    if sample_count < MIN_SAMPLES:
        raise SampleCountTooLow(sample_count)

    out_views: list[ViewSpec] = []
    references: list[tuple[ReferencePatch, ...]] = []
    thresholds: list[tuple[Thresholds, ...]] = []
    for view, frames in zip(views, samples):
        per_sample: list[tuple[RgbImage, tuple[WireBox, ...]]] = []
        for idx, frame in enumerate(frames):
            crop = crop_roi(frame, view.roi)
            outcome = segment_wires(
                crop, view.bg_range, view.scan, view.expected_wires, view.gradient
            )
            if isinstance(outcome, SegmentationUnclear):
                raise TrainingSampleUnclear(view.view_id, idx, outcome.reason)
            if progress is not None:
                progress(view.view_id, idx, f"segmented {len(outcome)} wires")
            boxes = tuple(_inset_box(b, view.patch_inset_frac) for b in outcome)
            per_sample.append((crop, boxes))

        refs = tuple(mean_patches(per_sample))
        patches_per_wire = [
            [resample_patch(img, boxes[w]) for img, boxes in per_sample]
            for w in range(view.expected_wires)
        ]
        base = calibrate_thresholds(patches_per_wire)
        ths = tuple(
            widen_for_low_confidence_hue(base) if r.hue_low_confidence else base
            for r in refs
        )

        ospec = view.orientation
        if isinstance(ospec, Distinct):
            ref_emb = extractor.extract(crop_roi(frames[0], ospec.connector_roi))
            threshold = ospec.similarity_threshold
            if reversed_exemplars and view.view_id in reversed_exemplars:
                rev_emb = extractor.extract(
                    crop_roi(reversed_exemplars[view.view_id], ospec.connector_roi)
                )
                peer_emb = extractor.extract(crop_roi(frames[1], ospec.connector_roi))
                threshold = calibrated_threshold(
                    cosine_similarity(ref_emb, peer_emb),
                    cosine_similarity(ref_emb, rev_emb),
                )
            ospec = dataclasses.replace(
                ospec, reference=ref_emb, similarity_threshold=threshold
            )

        out_views.append(dataclasses.replace(view, orientation=ospec))
        references.append(refs)
        thresholds.append(ths)

    return TrainedProfile(
        profile_id=profile_id or uuid.uuid4().hex,
        harness_type=harness_type,
        format_version=FORMAT_VERSION,
        extractor_version=extractor.version,
        views=tuple(out_views),
        references=tuple(references),
        thresholds=tuple(thresholds),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        sample_count=sample_count,
        provenance=tuple(provenance),
    )


def inspect(
    frames: Sequence[RgbImage],
    profile: TrainedProfile,
    extractor: EmbeddingExtractor = DEFAULT_EXTRACTOR,
) -> InspectionResult:
    """Score one frame per view against the profile and combine verdicts."""
    if profile.format_version != FORMAT_VERSION:
        raise ProfileVersionMismatch(
            f"profile format {profile.format_version!r}, supported {FORMAT_VERSION!r}"
        )
    if profile.extractor_version != extractor.version:
        raise ProfileVersionMismatch(
            f"profile built with extractor {profile.extractor_version!r}, "
            f"running {extractor.version!r}"
        )
    if len(frames) != len(profile.views):
        raise ValueError(f"got {len(frames)} frames for {len(profile.views)} views")

    view_results: list[ViewResult] = []
    wire_verdicts: list[WireVerdict] = []
    orientation_verdicts: list[OrientationVerdict] = []
    any_seg_unclear = False
    for frame, view, refs, ths in zip(
        frames, profile.views, profile.references, profile.thresholds
    ):
        try:
            crop = crop_roi(frame, view.roi)
            outcome = segment_wires(
                crop, view.bg_range, view.scan, view.expected_wires, view.gradient
            )
        except RoiOutOfBounds as exc:
            outcome = SegmentationUnclear(reason=str(exc))
        orient: Optional[OrientationVerdict] = None
        if view.orientation is not None:
            orient = verify_orientation(frame, view.orientation, extractor)
            orientation_verdicts.append(orient)
        if isinstance(outcome, SegmentationUnclear):
            any_seg_unclear = True
            view_results.append(
                ViewResult(
                    view_id=view.view_id,
                    segmented=False,
                    segmentation_reason=outcome.reason,
                    wires=(),
                    orientation=orient,
                )
            )
            continue
        reports = []
        for box, ref, th in zip(outcome, refs, ths):
            patch = resample_patch(crop, _inset_box(box, view.patch_inset_frac))
            score = score_wire(patch, ref)
            verdict = classify_wire(score, th)
            wire_verdicts.append(verdict)
            reports.append(WireReport(index=box.index, verdict=verdict, score=score, box=box))
        view_results.append(
            ViewResult(
                view_id=view.view_id,
                segmented=True,
                segmentation_reason=None,
                wires=tuple(reports),
                orientation=orient,
            )
        )

    overall = overall_verdict(wire_verdicts, orientation_verdicts, any_seg_unclear)
    return InspectionResult(
        views=tuple(view_results), overall=overall, message=_message(overall, view_results)
    )


def _message(overall: Verdict, views: Sequence[ViewResult]) -> str:
    if overall is Verdict.UNCLEAR:
        return UNCLEAR_MESSAGE
    if overall is Verdict.PASS:
        return "OK"
    parts = []
    for vr in views:
        bad = [w.index for w in vr.wires if w.verdict is WireVerdict.MISMATCH]
        if bad:
            parts.append(f"view {vr.view_id}: wire color mismatch at {bad}")
        if vr.orientation is OrientationVerdict.REVERSED:
            parts.append(f"view {vr.view_id}: connector reversed")
    return "; ".join(parts) if parts else "Fail"


# ---------------------------------------------------------------------------
# Result serialization (shared by the CLI --json output and the service API)

def result_to_dict(result: InspectionResult) -> dict:
    return {
        "overall": result.overall.value,
        "message": result.message,
        "views": [
            {
                "view_id": vr.view_id,
                "segmented": vr.segmented,
                "segmentation_reason": vr.segmentation_reason,
                "orientation": vr.orientation.value if vr.orientation else None,
                "wires": [
                    {
                        "index": w.index,
                        "verdict": w.verdict.value,
                        "mse_rgb": w.score.mse_rgb,
                        "mse_hsv": w.score.mse_hsv,
                        "box": {
                            "x_left": w.box.x_left,
                            "x_right": w.box.x_right,
                            "y_top": w.box.y_top,
                            "y_bottom": w.box.y_bottom,
                        },
                    }
                    for w in vr.wires
                ],
            }
            for vr in result.views
        ],
    }


def result_from_dict(d: dict) -> InspectionResult:
    views = []
    for vd in d["views"]:
        wires = tuple(
            WireReport(
                index=wd["index"],
                verdict=WireVerdict(wd["verdict"]),
                score=ColorScore(
                    wire_index=wd["index"], mse_rgb=wd["mse_rgb"], mse_hsv=wd["mse_hsv"]
                ),
                box=WireBox(
                    index=wd["index"],
                    x_left=wd["box"]["x_left"],
                    x_right=wd["box"]["x_right"],
                    y_top=wd["box"]["y_top"],
                    y_bottom=wd["box"]["y_bottom"],
                ),
            )
            for wd in vd["wires"]
        )
        views.append(
            ViewResult(
                view_id=vd["view_id"],
                segmented=vd["segmented"],
                segmentation_reason=vd["segmentation_reason"],
                wires=wires,
                orientation=(
                    OrientationVerdict(vd["orientation"]) if vd["orientation"] else None
                ),
            )
        )
    return InspectionResult(
        views=tuple(views), overall=Verdict(d["overall"]), message=d["message"]
    )


def view_from_config(d: dict) -> ViewSpec:
    """Build a ViewSpec from an operator-written config dict.

    Unlike the strict profile deserializer, omitted settings fall back to
    defaults: scan lines derived from the ROI height, green background range,
    stock gradient config.
    """
    roi = _roi_from_dict(d["roi"])
    scan = (
        ScanLineConfig(**d["scan"]) if d.get("scan") else ScanLineConfig.for_height(roi.height)
    )
    if d.get("gradient"):
        gd = dict(d["gradient"])
        if "template_drifts" in gd:
            gd["template_drifts"] = tuple(gd["template_drifts"])
        gradient = GradientConfig(**gd)
    else:
        gradient = GradientConfig()
    orientation: Optional[OrientationSpec] = None
    if d.get("orientation"):
        od = d["orientation"]
        kind = od.get("kind")
        if kind == "distinct":
            orientation = Distinct(
                connector_roi=_roi_from_dict(od["connector_roi"]),
                similarity_threshold=od.get(
                    "similarity_threshold", DEFAULT_SIMILARITY_THRESHOLD
                ),
            )
        elif kind == "symmetric":
            orientation = Symmetric(
                marker_roi=_roi_from_dict(od["marker_roi"]),
                marker_range=(
                    HsvRange(**od["marker_range"])
                    if od.get("marker_range")
                    else DEFAULT_MARKER_RANGE
                ),
                min_area_frac=od.get("min_area_frac", DEFAULT_MIN_AREA_FRAC),
            )
        else:
            raise ValueError(f"unknown orientation kind {kind!r}")
    return ViewSpec(
        view_id=d["view_id"],
        roi=roi,
        expected_wires=d["expected_wires"],
        bg_range=HsvRange(**d["bg_range"]) if d.get("bg_range") else DEFAULT_BG_RANGE,
        scan=scan,
        gradient=gradient,
        orientation=orientation,
        patch_inset_frac=d.get("patch_inset_frac", DEFAULT_PATCH_INSET_FRAC),
    )


# ---------------------------------------------------------------------------
# Profile persistence: one JSON document with a CRC-32 over its canonical form

def _b64_f64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _unb64_f64(data: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"))
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise CorruptProfile(f"raster payload is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def _roi_to_dict(roi: Roi) -> dict:
    return {"x": roi.x, "y": roi.y, "width": roi.width, "height": roi.height}


def _roi_from_dict(d: dict) -> Roi:
    return Roi(x=d["x"], y=d["y"], width=d["width"], height=d["height"])


def _hsv_range_to_dict(r: HsvRange) -> dict:
    return {
        "h_lo": r.h_lo, "h_hi": r.h_hi,
        "s_lo": r.s_lo, "s_hi": r.s_hi,
        "v_lo": r.v_lo, "v_hi": r.v_hi,
    }


def _orientation_to_dict(spec: OrientationSpec) -> dict:
    if isinstance(spec, Distinct):
        return {
            "kind": "distinct",
            "connector_roi": _roi_to_dict(spec.connector_roi),
            "similarity_threshold": spec.similarity_threshold,
            "reference": None if spec.reference is None else _b64_f64(spec.reference.values),
            "reference_length": None if spec.reference is None else len(spec.reference),
        }
    return {
        "kind": "symmetric",
        "marker_roi": _roi_to_dict(spec.marker_roi),
        "marker_range": _hsv_range_to_dict(spec.marker_range),
        "min_area_frac": spec.min_area_frac,
    }


def _orientation_from_dict(d: dict) -> OrientationSpec:
    if d["kind"] == "distinct":
        reference = None
        if d["reference"] is not None:
            reference = EmbeddingVector(_unb64_f64(d["reference"], (d["reference_length"],)))
        return Distinct(
            connector_roi=_roi_from_dict(d["connector_roi"]),
            reference=reference,
            similarity_threshold=d["similarity_threshold"],
        )
    if d["kind"] == "symmetric":
        return Symmetric(
            marker_roi=_roi_from_dict(d["marker_roi"]),
            marker_range=HsvRange(**d["marker_range"]),
            min_area_frac=d["min_area_frac"],
        )
    raise CorruptProfile(f"unknown orientation kind {d.get('kind')!r}")


def _view_to_dict(view: ViewSpec) -> dict:
    scan = view.scan
    g = view.gradient
    return {
        "view_id": view.view_id,
        "roi": _roi_to_dict(view.roi),
        "expected_wires": view.expected_wires,
        "bg_range": _hsv_range_to_dict(view.bg_range),
        "scan": {
            "primary_top": scan.primary_top,
            "primary_bottom": scan.primary_bottom,
            "fallback_top": scan.fallback_top,
            "fallback_bottom": scan.fallback_bottom,
        },
        "gradient": {
            "grad_threshold": g.grad_threshold,
            "sum_threshold_frac": g.sum_threshold_frac,
            "seg_min_width": g.seg_min_width,
            "seg_max_width": g.seg_max_width,
            "template_width": g.template_width,
            "template_thickness": g.template_thickness,
            "template_drifts": list(g.template_drifts),
            "overlap_accept": g.overlap_accept,
            "combine_mode": g.combine_mode,
        },
        "orientation": None if view.orientation is None else _orientation_to_dict(view.orientation),
        "patch_inset_frac": view.patch_inset_frac,
    }


def _view_from_dict(d: dict) -> ViewSpec:
    gd = dict(d["gradient"])
    gd["template_drifts"] = tuple(gd["template_drifts"])
    return ViewSpec(
        view_id=d["view_id"],
        roi=_roi_from_dict(d["roi"]),
        expected_wires=d["expected_wires"],
        bg_range=HsvRange(**d["bg_range"]),
        scan=ScanLineConfig(**d["scan"]),
        gradient=GradientConfig(**gd),
        orientation=None if d["orientation"] is None else _orientation_from_dict(d["orientation"]),
        patch_inset_frac=d["patch_inset_frac"],
    )


def _reference_to_dict(ref: ReferencePatch) -> dict:
    return {
        "wire_index": ref.wire_index,
        "shape": list(ref.mean_rgb.shape),
        "mean_rgb": _b64_f64(ref.mean_rgb),
        "mean_hsv": _b64_f64(ref.mean_hsv),
        "hue_low_confidence": ref.hue_low_confidence,
    }


def _reference_from_dict(d: dict) -> ReferencePatch:
    shape = tuple(d["shape"])
    return ReferencePatch(
        wire_index=d["wire_index"],
        mean_rgb=_unb64_f64(d["mean_rgb"], shape),
        mean_hsv=_unb64_f64(d["mean_hsv"], shape),
        hue_low_confidence=d["hue_low_confidence"],
    )


def _profile_to_dict(profile: TrainedProfile) -> dict:
    return {
        "format_version": profile.format_version,
        "profile_id": profile.profile_id,
        "harness_type": profile.harness_type,
        "extractor_version": profile.extractor_version,
        "created_at": profile.created_at,
        "sample_count": profile.sample_count,
        "provenance": list(profile.provenance),
        "views": [_view_to_dict(v) for v in profile.views],
        "references": [
            [_reference_to_dict(r) for r in refs] for refs in profile.references
        ],
        "thresholds": [
            [
                {
                    "t_match_rgb": t.t_match_rgb,
                    "t_mismatch_rgb": t.t_mismatch_rgb,
                    "t_match_hsv": t.t_match_hsv,
                    "t_mismatch_hsv": t.t_mismatch_hsv,
                }
                for t in ths
            ]
            for ths in profile.thresholds
        ],
    }


def _checksum(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return format(zlib.crc32(canonical.encode("utf-8")), "08x")


def profile_path(root: Union[str, Path], harness_type: str, profile_id: str) -> Path:
    return Path(root) / harness_type / f"{profile_id}.harnessprofile.json"


def save_profile(profile: TrainedProfile, path: Union[str, Path]) -> None:
    doc = _profile_to_dict(profile)
    doc["checksum"] = _checksum(doc)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_profile(path: Union[str, Path]) -> TrainedProfile:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptProfile(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptProfile("profile document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionUnsupported(
            f"profile format {version!r}, supported {FORMAT_VERSION!r}"
        )
    stored = doc.pop("checksum", None)
    if stored is None or stored != _checksum(doc):
        raise CorruptProfile("checksum mismatch")
    try:
        return TrainedProfile(
            profile_id=doc["profile_id"],
            harness_type=doc["harness_type"],
            format_version=doc["format_version"],
            extractor_version=doc["extractor_version"],
            views=tuple(_view_from_dict(v) for v in doc["views"]),
            references=tuple(
                tuple(_reference_from_dict(r) for r in refs) for refs in doc["references"]
            ),
            thresholds=tuple(
                tuple(Thresholds(**t) for t in ths) for ths in doc["thresholds"]
            ),
            created_at=doc["created_at"],
            sample_count=doc["sample_count"],
            provenance=tuple(doc["provenance"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptProfile(f"malformed profile field: {exc}") from exc
