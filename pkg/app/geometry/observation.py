"""One defect seen in one frame."""
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional

from geometry.boxes import BoundingBox

FIT_OK = "ok"
FIT_FALLBACK = "fallback"


@dataclass(frozen=True)
class DefectObservation:
    """
    Detection box plus whatever later stages learnt about it.

    ``center_x``/``center_y`` default to the box centre and must lie inside the box.
    ``size_nm`` and ``fit_status`` are filled in by segmentation.
    """

    frame: int
    box: BoundingBox
    center_x: float
    center_y: float
    confidence: Optional[float] = None
    size_nm: Optional[float] = None
    fit_status: Optional[str] = None

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"Frame index must be non-negative, got {self.frame}")
        if not self.box.contains(self.center_x, self.center_y):
            raise ValueError(f"Centre ({self.center_x}, {self.center_y}) lies outside {self.box}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Confidence must be in [0, 1], got {self.confidence}")
        if self.size_nm is not None and not (self.size_nm > 0 and math.isfinite(self.size_nm)):
            raise ValueError(f"Size must be a positive finite value, got {self.size_nm}")

    @classmethod
    def from_box(cls, frame: int, box: BoundingBox, confidence: Optional[float] = None) -> "DefectObservation":
        cx, cy = box.center
        return cls(frame=frame, box=box, center_x=cx, center_y=cy, confidence=confidence)

    def shifted(self, dx: float, dy: float) -> "DefectObservation":
        """Same observation with centre and box moved by ``(dx, dy)`` px."""
        return replace(self, box=self.box.translated(dx, dy), center_x=self.center_x + dx, center_y=self.center_y + dy)


def group_by_frame(observations: Iterable[DefectObservation]) -> Dict[int, List[DefectObservation]]:
    """Frame-sorted mapping of frame -> observations, input order kept within a frame."""
    grouped: Dict[int, List[DefectObservation]] = {}
    for obs in observations:
        grouped.setdefault(obs.frame, []).append(obs)
    return dict(sorted(grouped.items()))
