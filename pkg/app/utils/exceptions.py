"""Error types raised across the defect analytics pipeline."""
from typing import Iterable


class DefectAnalyticsError(Exception):
    """Root of every error the pipeline raises on purpose."""


class DomainError(DefectAnalyticsError, ValueError):
    """A physical quantity outside its valid domain (negative dpa, negative length)."""


class InvalidBoxError(DefectAnalyticsError, ValueError):
    """Bounding box with x_min >= x_max or y_min >= y_max."""


class DegenerateImageError(DefectAnalyticsError, ValueError):
    """Image content that cannot be thresholded (e.g. a constant crop)."""


class SegmentationFailed(DefectAnalyticsError):
    """Watershed segmentation produced no usable foreground region."""


class EllipseFitError(DefectAnalyticsError):
    """Contour cannot be fitted by an ellipse."""


class RefineError(DefectAnalyticsError):
    """Centroid refinement walked off the image or found no mass."""


class UndefinedDiffusionError(DefectAnalyticsError):
    """Trajectory has no unit-lag displacement to estimate D_eff from."""


class SchemaError(DefectAnalyticsError):
    """File header is missing or declares an unknown schema."""


class SubnetOversizeError(DefectAnalyticsError):
    """Linking subnetwork too large for exhaustive assignment."""

    def __init__(self, frame: int, size: int, max_size: int):
        self.frame = frame
        self.size = size
        self.max_size = max_size
        super().__init__(
            f"Subnetwork of {size} particles at frame {frame} exceeds the limit of {max_size}; "
            f"lower the search range or raise the subnetwork limit"
        )


class MissingFramesError(DefectAnalyticsError):
    """Detections reference frames with no image file."""

    def __init__(self, missing: Iterable[int]):
        self.missing = sorted(missing)
        super().__init__(f"No frame image for frames: {', '.join(str(f) for f in self.missing)}")
