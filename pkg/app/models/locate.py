"""
Detector-free baseline locator: band-pass filter, local-maximum candidates,
iterated centroid refinement.

Array routines work in index space (pixel ``(row, col)`` centred on
``(x=col, y=row)``). :class:`BaselineLocator` converts to frame coordinates,
where pixel ``(row, col)`` covers ``[col, col + 1) x [row, row + 1)``.
"""
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage as ndi

from geometry.boxes import BoundingBox
from geometry.observation import DefectObservation
from preprocessing.frames import Loader
from utils.exceptions import RefineError
from utils.logger import SingletonLogger, log_exceptions


class LocateParams(BaseModel):
    """
    Fields:
        feature_diameter_px (int): Odd feature size; sets boxcar width, peak separation and mask.
        noise_scale_px (float): Gaussian smoothing sigma.
        intensity_percentile (float): Candidates must exceed this percentile of non-zero filtered pixels.
        max_refine_iters (int): Cap on centroid re-centring steps.
        convergence_px (float): Stop refining once the estimate moves less than this.
    """

    model_config = ConfigDict(frozen=True)

    feature_diameter_px: int = Field(9, ge=3)
    noise_scale_px: float = Field(1.0, gt=0)
    intensity_percentile: float = Field(64.0, ge=0.0, le=100.0)
    max_refine_iters: int = Field(10, ge=1)
    convergence_px: float = Field(0.005, gt=0)

    @field_validator("feature_diameter_px")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"Feature diameter must be odd, got {value}")
        return value

    @property
    def radius(self) -> int:
        return self.feature_diameter_px // 2


@dataclass(frozen=True)
class RefinedFeature:
    x: float
    y: float
    mass: float
    size: float  # radius of gyration, px


def _disk(radius: int) -> np.ndarray:
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return dx * dx + dy * dy <= radius * radius


def bandpass(img: np.ndarray, params: LocateParams) -> np.ndarray:
    """
    Gaussian smoothing at the noise scale minus a boxcar average over the feature
    diameter; negative responses are clamped to 0.

    Args:
        img (np.ndarray): 2-D image, features bright.
        params (LocateParams): Locator parameters.

    Returns:
        np.ndarray: Non-negative float image.
    """
    if params.feature_diameter_px >= min(img.shape):
        raise ValueError(f"Feature diameter {params.feature_diameter_px} must be smaller than the image {img.shape}")
    data = np.asarray(img, dtype=float)
    smoothed = ndi.gaussian_filter(data, sigma=params.noise_scale_px, mode="nearest")
    background = ndi.uniform_filter(data, size=params.feature_diameter_px, mode="nearest")
    result = smoothed - background
    # rounding residue of flat regions is not a feature
    tolerance = 1e-9 * max(1.0, float(np.abs(data).max()))
    result[result < tolerance] = 0.0
    return result


def find_candidates(filtered: np.ndarray, params: LocateParams) -> List[Tuple[int, int]]:
    """
    Strict local maxima within ``diameter // 2`` that exceed the intensity percentile
    of non-zero pixels, ignoring peaks whose refinement mask would leave the image.

    Returns:
        List[Tuple[int, int]]: ``(x, y)`` integer peaks in row-major order.
    """
    nonzero = filtered[filtered > 0]
    if nonzero.size == 0:
        return []

    footprint = _disk(params.radius)
    footprint[params.radius, params.radius] = False
    neighbour_max = ndi.maximum_filter(filtered, footprint=footprint, mode="constant", cval=0.0)
    cutoff = np.percentile(nonzero, params.intensity_percentile)
    peaks = (filtered > neighbour_max) & (filtered > cutoff) & (filtered > 0)

    r = params.radius
    peaks[:r, :] = False
    peaks[-r:, :] = False
    peaks[:, :r] = False
    peaks[:, -r:] = False
    rows, cols = np.nonzero(peaks)
    return [(int(c), int(r_)) for r_, c in zip(rows, cols)]


def refine_centroid(filtered: np.ndarray, peak: Tuple[int, int], params: LocateParams) -> RefinedFeature:
    """
    Intensity-weighted centroid inside a circular mask, re-centred on the nearest
    pixel until the estimate settles.

    Args:
        filtered (np.ndarray): Band-passed image.
        peak (Tuple[int, int]): Starting ``(x, y)`` pixel.
        params (LocateParams): Locator parameters.

    Returns:
        RefinedFeature: Sub-pixel centre, total masked intensity and radius of gyration.

    Raises:
        RefineError: The mask leaves the image or holds no intensity.
    """
    r = params.radius
    mask = _disk(r)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    height, width = filtered.shape
    cx, cy = int(peak[0]), int(peak[1])
    x, y = float(cx), float(cy)

    for _ in range(params.max_refine_iters):
        wx, wy = cx, cy
        if cx - r < 0 or cy - r < 0 or cx + r >= width or cy + r >= height:
            raise RefineError(f"Refinement mask at ({cx}, {cy}) leaves the {width}x{height} image")
        weights = filtered[cy - r:cy + r + 1, cx - r:cx + r + 1] * mask
        mass = float(weights.sum())
        if mass <= 0:
            raise RefineError(f"No intensity under the mask at ({cx}, {cy})")

        new_x = cx + float((weights * dx).sum()) / mass
        new_y = cy + float((weights * dy).sum()) / mass
        shift = math.hypot(new_x - x, new_y - y)
        x, y = new_x, new_y
        next_cx, next_cy = int(round(x)), int(round(y))
        if shift < params.convergence_px or (next_cx, next_cy) == (cx, cy):
            break
        cx, cy = next_cx, next_cy

    rel_x = wx + dx - x
    rel_y = wy + dy - y
    size = math.sqrt(float((weights * (rel_x ** 2 + rel_y ** 2)).sum()) / mass)
    return RefinedFeature(x=x, y=y, mass=mass, size=size)


class Locator(ABC):
    """
    Abstract base class for per-frame defect detectors.
    """

    @abstractmethod
    def locate(self, img: np.ndarray, frame: int) -> List[DefectObservation]:
        """
        Detects defects in one frame.

        Args:
            img (np.ndarray): Grayscale frame.
            frame (int): Frame index stamped on the observations.
        """
        pass


class BaselineLocator(Locator):
    """
    Band-pass / local-maximum / centroid locator producing fixed-size boxes.

    Confidence is the feature mass relative to the heaviest feature in the frame.
    """

    def __init__(self, params: LocateParams = LocateParams(), dark_foreground: bool = True):
        self.params = params
        self.dark_foreground = dark_foreground
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger

    def features(self, img: np.ndarray) -> List[RefinedFeature]:
        data = np.asarray(img, dtype=float)
        if self.dark_foreground:
            data = data.max() - data
        filtered = bandpass(data, self.params)
        found = []
        for peak in find_candidates(filtered, self.params):
            try:
                found.append(refine_centroid(filtered, peak, self.params))
            except RefineError as exc:
                self.logger.debug(f"⚠️ Dropped candidate {peak}: {exc}")
        return found

    def locate(self, img: np.ndarray, frame: int) -> List[DefectObservation]:
        height, width = img.shape[:2]
        found = self.features(img)
        if not found:
            return []
        heaviest = max(f.mass for f in found)
        side = float(self.params.feature_diameter_px)
        observations = []
        for feature in found:
            cx, cy = feature.x + 0.5, feature.y + 0.5
            raw = BoundingBox.around(cx, cy, side)
            box = BoundingBox(max(raw.x_min, 0.0), max(raw.y_min, 0.0), min(raw.x_max, width), min(raw.y_max, height))
            observations.append(
                DefectObservation(frame=frame, box=box, center_x=cx, center_y=cy, confidence=feature.mass / heaviest)
            )
        return observations

    def _locate_loaded(self, frames: Loader, frame: int) -> List[DefectObservation]:
        return self.locate(frames.read_frame(frame), frame)

    @log_exceptions("Baseline locating failed")
    def locate_sequence(self, frames: Loader, max_workers: int = 1) -> Dict[int, List[DefectObservation]]:
        """
        Locates defects in every frame of a sequence.

        Args:
            frames (Loader): Frame source.
            max_workers (int): Number of threads.

        Returns:
            Dict[int, List[DefectObservation]]: Observations per frame, frame order.
        """
        self.logger.info(f"🔎 Locating defects in {len(frames.frame_numbers())} frames")
        located: Dict[int, List[DefectObservation]] = {}
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(self._locate_loaded, frames, frame): frame for frame in frames.frame_numbers()}
            for future in as_completed(futures):
                located[futures[future]] = future.result()
        self.logger.info(f"✅ Located {sum(len(v) for v in located.values())} defects")
        return dict(sorted(located.items()))
