"""Color-sequence inspection for wire harness assemblies."""
from __future__ import annotations

from . import errors
from .imaging import (
    BinaryMask,
    GrayImage,
    HsvPixel,
    HsvRange,
    RgbImage,
    Roi,
    crop_roi,
    read_png,
    rgb_to_hsv,
    rgb_to_hsv_array,
    to_grayscale,
    write_png,
)
from .segmentation import (
    DEFAULT_BG_RANGE,
    EndpointRow,
    NeedsGradient,
    ScanLineConfig,
    SegmentationUnclear,
    WireBox,
    background_mask,
    bounding_boxes,
    detect_endpoints,
    scan_line_endpoints,
    segment_wires,
)
from .gradient import (
    GradientConfig,
    LineTemplate,
    SegmentCandidate,
    TemplateMatch,
    build_gradient_mask,
    combine_masks,
    default_templates,
    find_segments,
    make_line_template,
    match_template,
    threshold_gradient,
    vertical_sum,
    x_gradient,
)
from .colorcmp import (
    ColorScore,
    ReferencePatch,
    Thresholds,
    WireVerdict,
    calibrate_thresholds,
    classify_wire,
    mean_patches,
    mse_hsv,
    mse_rgb,
    resample_patch,
    score_wire,
)
from .orientation import (
    DEFAULT_EXTRACTOR,
    DEFAULT_MARKER_RANGE,
    Distinct,
    EmbeddingVector,
    HistGradExtractor,
    OrientationVerdict,
    Symmetric,
    cosine_similarity,
    detect_marker,
    extract_embedding,
    verify_orientation,
)
from .profile import (
    InspectionResult,
    TrainedProfile,
    Verdict,
    ViewResult,
    ViewSpec,
    WireReport,
    inspect,
    load_profile,
    overall_verdict,
    profile_path,
    result_from_dict,
    result_to_dict,
    save_profile,
    train,
)
from .synth import (
    CORPUS_PALETTE_8,
    DEFAULT_BG_COLOR,
    GroundTruth,
    HarnessSpec,
    generate,
    permute_defect,
)

__version__ = "0.1.0"
