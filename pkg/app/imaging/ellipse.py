"""
Direct least-squares ellipse fitting (numerically stable Halir-Flusser form).
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from utils.exceptions import EllipseFitError

MIN_POINTS = 5
# inverse of the ellipse constraint matrix [[0, 0, 2], [0, -1, 0], [2, 0, 0]]
_INV_CONSTRAINT = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])


@dataclass(frozen=True)
class EllipseFit:
    center_x: float
    center_y: float
    major_axis: float  # full length, px
    minor_axis: float
    orientation: float  # radians in [0, pi), direction of the major axis

    @property
    def eccentricity(self) -> float:
        return math.sqrt(1.0 - (self.minor_axis / self.major_axis) ** 2)


def _conic_coefficients(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise EllipseFitError("Contour points are collinear or repeated") from exc

    m = _INV_CONSTRAINT @ (s1 + s2 @ t)
    values, vectors = np.linalg.eig(m)
    values, vectors = values.real, vectors.real
    constraint = 4.0 * vectors[0] * vectors[2] - vectors[1] ** 2
    admissible = np.flatnonzero(constraint > 0)
    if admissible.size == 0:
        raise EllipseFitError("No elliptical solution for these points")
    best = admissible[np.argmin(np.abs(values[admissible]))]
    a1 = vectors[:, best]
    return np.concatenate([a1, t @ a1])


def _conic_to_geometry(coef: np.ndarray) -> Tuple[float, float, float, float, float]:
    a, b, c, d, e, f = coef
    quad = np.array([[a, b / 2.0], [b / 2.0, c]])
    try:
        x0, y0 = np.linalg.solve(2.0 * quad, [-d, -e])
    except np.linalg.LinAlgError as exc:
        raise EllipseFitError("Conic has no centre") from exc

    f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f
    eigvals, eigvecs = np.linalg.eigh(quad)
    with np.errstate(divide="ignore", invalid="ignore"):
        semi_sq = -f0 / eigvals
    if not (np.all(np.isfinite(semi_sq)) and np.all(semi_sq > 0)):
        raise EllipseFitError("Fitted conic is not a real ellipse")

    semi = np.sqrt(semi_sq)
    major_idx = int(np.argmax(semi))
    vx, vy = eigvecs[:, major_idx]
    theta = math.atan2(vy, vx) % math.pi
    if math.isclose(theta, math.pi, abs_tol=1e-12) or math.isclose(semi[0], semi[1], rel_tol=1e-9):
        theta = 0.0
    return x0, y0, 2.0 * semi[major_idx], 2.0 * semi[1 - major_idx], theta


def fit_ellipse(points: Sequence[Tuple[float, float]]) -> EllipseFit:
    """
    Fits an ellipse to contour points by constrained least squares.

    Points are centred and scaled before fitting, so the result does not depend
    on where the contour sits in the frame.

    Args:
        points (Sequence[Tuple[float, float]]): (x, y) samples, at least 5.

    Returns:
        EllipseFit: Centre, full axis lengths and major-axis orientation.

    Raises:
        EllipseFitError: Too few points or a configuration without an elliptical fit.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < MIN_POINTS:
        raise EllipseFitError(f"Need at least {MIN_POINTS} points, got {pts.shape[0]}")
    if not np.isfinite(pts).all():
        raise EllipseFitError("Contour points must be finite")

    mean = pts.mean(axis=0)
    scale = float(np.sqrt(((pts - mean) ** 2).sum(axis=1).mean()))
    if scale == 0.0:
        raise EllipseFitError("All contour points coincide")
    norm = (pts - mean) / scale

    cx, cy, major, minor, theta = _conic_to_geometry(_conic_coefficients(norm[:, 0], norm[:, 1]))
    fit = EllipseFit(
        center_x=float(cx * scale + mean[0]),
        center_y=float(cy * scale + mean[1]),
        major_axis=float(major * scale),
        minor_axis=float(minor * scale),
        orientation=float(theta),
    )
    if not np.isfinite([fit.center_x, fit.center_y, fit.major_axis, fit.minor_axis]).all():
        raise EllipseFitError("Ellipse fit produced non-finite parameters")
    return fit
