"""Exception types shared across the inspection pipeline."""
from __future__ import annotations


class HarnessCheckError(Exception):
    """Base class for all errors raised by this package."""


class RoiOutOfBounds(HarnessCheckError):
    """An ROI extends past the frame it is applied to."""


class EndpointCountMismatch(HarnessCheckError):
    """A scan line produced a different wire-interval count than expected."""

    def __init__(self, found: int, expected: int, y: int | None = None):
        self.found = found
        self.expected = expected
        self.y = y
        where = f" at row {y}" if y is not None else ""
        super().__init__(f"found {found} wire intervals{where}, expected {expected}")


class MalformedAlternation(HarnessCheckError):
    """Scan-line transitions did not alternate open/close (corrupt mask)."""


class DegenerateBox(HarnessCheckError):
    """A computed wire box has zero or negative extent."""


class ImageTooNarrow(HarnessCheckError):
    """The image has too few columns for an x-gradient."""


class ShapeMismatch(HarnessCheckError):
    """Two rasters that must share a shape do not."""


class SampleCountTooLow(HarnessCheckError):
    """Fewer training samples than the required minimum of five."""

    def __init__(self, found: int, minimum: int = 5):
        self.found = found
        self.minimum = minimum
        super().__init__(
            f"training requires a minimum of five correct samples, got {found}"
        )


class WireCountInconsistent(HarnessCheckError):
    """Training samples disagree on the number of wires."""


class EmptyPatch(HarnessCheckError):
    """An embedding was requested for an empty patch."""


class ZeroVector(HarnessCheckError):
    """Cosine similarity is undefined for a zero-magnitude vector."""


class TrainingSampleUnclear(HarnessCheckError):
    """A training sample could not be segmented; the operator must re-shoot."""

    def __init__(self, view_id: str, sample_index: int, reason: str = ""):
        self.view_id = view_id
        self.sample_index = sample_index
        detail = f": {reason}" if reason else ""
        super().__init__(
            f"training sample {sample_index} of view '{view_id}' "
            f"could not be segmented{detail}"
        )


class ProfileVersionMismatch(HarnessCheckError):
    """Profile was produced under a different format or extractor version."""


class FormatVersionUnsupported(HarnessCheckError):
    """Profile file declares a format version this build cannot read."""


class CorruptProfile(HarnessCheckError):
    """Profile file failed its checksum or structural validation."""


class SpecInvalid(HarnessCheckError):
    """A synthetic harness spec violates its own constraints."""


class IndexOutOfRange(HarnessCheckError):
    """A wire index passed to a defect permutation does not exist."""
