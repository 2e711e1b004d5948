"""
Per-defect size: segment the box, trace the defect outline, fit an ellipse,
report its major axis in nm. Boxes whose segmentation or fit fails fall back
to the longer box side.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy import ndimage as ndi
from skimage.measure import find_contours

from geometry.boxes import BoundingBox
from geometry.observation import FIT_FALLBACK, FIT_OK, DefectObservation
from imaging.ellipse import EllipseFit, fit_ellipse
from imaging.segmentation import SQUARE_3X3, DefectMask, SegmentParams, segment_defect
from physics.calibration import Calibration, px_to_nm
from preprocessing.frames import Loader
from utils.exceptions import EllipseFitError, MissingFramesError, SegmentationFailed
from utils.logger import SingletonLogger, log_exceptions


def fallback_size_nm(box: BoundingBox, cal: Calibration) -> float:
    return px_to_nm(max(box.width, box.height), cal)


def defect_contour(segmented: DefectMask, dark_foreground: bool = True) -> np.ndarray:
    """
    Sub-pixel outline of the segmented defect in frame coordinates.

    The crop is traced at the Otsu level after every pixel outside a one-pixel
    dilation of the mask is set to pure background, so neighbouring defects
    cannot contribute. Pixel ``(row, col)`` has its centre at ``(col + 0.5, row + 0.5)``.

    Returns:
        np.ndarray: (N, 2) array of (x, y) points of the longest contour; empty if none.
    """
    region = ndi.binary_dilation(segmented.mask, structure=SQUARE_3X3)
    background = 255.0 if dark_foreground else 0.0
    relief = np.where(region, segmented.crop.astype(float), background)
    # pad so outlines touching the crop edge still close
    relief = np.pad(relief, 1, constant_values=background)

    contours = find_contours(relief, level=segmented.threshold - 0.5)
    if not contours:
        return np.zeros((0, 2))
    longest = max(contours, key=len)
    xs = longest[:, 1] - 1 + segmented.x_offset + 0.5
    ys = longest[:, 0] - 1 + segmented.y_offset + 0.5
    return np.column_stack([xs, ys])


def fit_defect(img: np.ndarray, box: BoundingBox, params: SegmentParams = SegmentParams()) -> EllipseFit:
    """Segments the defect in ``box`` and fits an ellipse to its outline (frame pixels)."""
    segmented = segment_defect(img, box, params)
    return fit_ellipse(defect_contour(segmented, params.dark_foreground))


class DefectSegmenter:
    """
    Adds ``size_nm`` and ``fit_status`` to detections by watershed segmentation
    and ellipse fitting, one frame per worker thread.
    """

    def __init__(self, cal: Calibration, params: SegmentParams = SegmentParams()):
        self.cal = cal
        self.params = params
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger

    def size_observation(self, img: np.ndarray, obs: DefectObservation) -> DefectObservation:
        """
        Sizes one observation; a fitted ellipse centre inside the box also replaces the box centre.

        Args:
            img (np.ndarray): Frame the observation belongs to.
            obs (DefectObservation): Detection to size.

        Returns:
            DefectObservation: Copy with ``size_nm`` and ``fit_status`` set.
        """
        try:
            fit = fit_defect(img, obs.box, self.params)
        except (SegmentationFailed, EllipseFitError) as exc:
            self.logger.debug(f"⚠️ Frame {obs.frame} box {obs.box.as_tuple()}: {exc}; using box size")
            return replace(obs, size_nm=fallback_size_nm(obs.box, self.cal), fit_status=FIT_FALLBACK)

        updated = replace(obs, size_nm=px_to_nm(fit.major_axis, self.cal), fit_status=FIT_OK)
        if obs.box.contains(fit.center_x, fit.center_y):
            updated = replace(updated, center_x=fit.center_x, center_y=fit.center_y)
        return updated

    def segment_frame(self, img: np.ndarray, observations: Sequence[DefectObservation]) -> List[DefectObservation]:
        return [self.size_observation(img, obs) for obs in observations]

    def _segment_loaded(self, frames: Loader, frame: int, observations: Sequence[DefectObservation]) -> List[DefectObservation]:
        return self.segment_frame(frames.read_frame(frame), observations)

    @log_exceptions("Segmentation of frame sequence failed")
    def segment_sequence(
        self,
        frames: Loader,
        detections: Mapping[int, Sequence[DefectObservation]],
        max_workers: int = 1,
    ) -> Dict[int, List[DefectObservation]]:
        """
        Sizes every detection of every frame.

        Args:
            frames (Loader): Frame source.
            detections (Mapping[int, Sequence[DefectObservation]]): Observations per frame.
            max_workers (int): Number of threads.

        Returns:
            Dict[int, List[DefectObservation]]: Sized observations in frame order.

        Raises:
            MissingFramesError: A detection frame has no image.
        """
        available = set(frames.frame_numbers())
        missing = [f for f in detections if f not in available]
        if missing:
            raise MissingFramesError(missing)

        self.logger.info(f"🔬 Segmenting {sum(len(v) for v in detections.values())} defects in {len(detections)} frames")
        sized: Dict[int, List[DefectObservation]] = {}
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {
                executor.submit(self._segment_loaded, frames, frame, observations): frame
                for frame, observations in detections.items()
            }
            for future in as_completed(futures):
                sized[futures[future]] = future.result()

        sized = dict(sorted(sized.items()))
        fallbacks = sum(1 for obs_list in sized.values() for obs in obs_list if obs.fit_status == FIT_FALLBACK)
        self.logger.info(f"✅ Sized {sum(len(v) for v in sized.values())} defects ({fallbacks} box-size fallbacks)")
        return sized


def size_distribution(observations: Mapping[int, Sequence[DefectObservation]]) -> Dict[int, List[float]]:
    """Sizes in nm per frame, skipping observations without a size."""
    return {
        frame: [obs.size_nm for obs in obs_list if obs.size_nm is not None]
        for frame, obs_list in observations.items()
    }
