"""Axis-aligned bounding boxes, IoU and non-max suppression."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from utils.exceptions import InvalidBoxError


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel rectangle ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (np.isfinite([self.x_min, self.y_min, self.x_max, self.y_max]).all()):
            raise InvalidBoxError(f"Non-finite box coordinates: {self}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidBoxError(f"Box must satisfy x_min < x_max and y_min < y_max: {self}")

    @classmethod
    def from_pixel_indices(cls, col_min: int, row_min: int, col_max: int, row_max: int) -> "BoundingBox":
        """Box covering the inclusive pixel index range, each pixel being a unit square."""
        return cls(float(col_min), float(row_min), float(col_max) + 1.0, float(row_max) + 1.0)

    @classmethod
    def around(cls, x: float, y: float, side: float) -> "BoundingBox":
        half = side / 2.0
        return cls(x - half, y - half, x + half, y + half)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.x_min, self.y_min, self.x_max, self.y_max


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def _as_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=float)
    return np.array([b.as_tuple() for b in boxes], dtype=float)


def iou_matrix(rows: Sequence[BoundingBox], cols: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(rows), len(cols))``."""
    a = _as_array(rows)[:, None, :]
    b = _as_array(cols)[None, :, :]
    inter_w = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0.0, None)
    inter_h = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0.0, None)
    inter = inter_w * inter_h
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


def nms(boxes: Sequence[BoundingBox], scores: Sequence[float], iou_threshold: float) -> List[int]:
    """
    Greedy non-max suppression.

    Boxes are visited by descending score (ties by lower index); each kept box
    suppresses every remaining box overlapping it with IoU above the threshold.

    Args:
        boxes (Sequence[BoundingBox]): Candidate boxes.
        scores (Sequence[float]): One confidence per box.
        iou_threshold (float): Suppression threshold in [0, 1].

    Returns:
        List[int]: Indices of kept boxes in selection order.
    """
    if len(boxes) != len(scores):
        raise ValueError(f"Got {len(boxes)} boxes but {len(scores)} scores")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"IoU threshold must be in [0, 1], got {iou_threshold}")
    if len(boxes) == 0:
        return []

    overlaps = iou_matrix(boxes, boxes)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")

    keep = []
    while order.size > 0:
        i = int(order[0])
        keep.append(i)
        order = order[1:][overlaps[i, order[1:]] <= iou_threshold]
    return keep
