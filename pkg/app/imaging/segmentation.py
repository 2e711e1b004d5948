"""
Grayscale raster operations behind defect segmentation.

Follows the marker-based watershed recipe: Otsu binarisation, 3x3 opening,
sure background by dilation, sure foreground by a distance-transform
threshold, flooding of the unknown band, then selection of the region under
the crop centre.
"""
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage as ndi
from skimage.filters import sobel
from skimage.segmentation import watershed as skimage_watershed
from skimage.util import img_as_ubyte

from geometry.boxes import BoundingBox
from utils.exceptions import DegenerateImageError, SegmentationFailed

SQUARE_3X3 = np.ones((3, 3), dtype=bool)
BOUNDARY_LABEL = 0
BACKGROUND_LABEL = 1


class SegmentParams(BaseModel):
    """
    Knobs of the per-defect watershed.

    Fields:
        pad_px (int): Context added around the box before thresholding.
        open_iterations (int): Iterations of the 3x3 opening.
        background_dilations (int): Dilations of the opening that give sure background.
        sure_foreground_ratio (float): Sure foreground is distance >= ratio * max distance.
        dark_foreground (bool): Defects are darker than the background.
        surface (str): ``intensity`` floods the polarity-normalised intensity, ``gradient`` its Sobel magnitude.
    """

    model_config = ConfigDict(frozen=True)

    pad_px: int = Field(4, ge=0)
    open_iterations: int = Field(1, ge=1)
    background_dilations: int = Field(3, ge=1)
    sure_foreground_ratio: float = Field(0.7, ge=0.0, le=1.0)
    dark_foreground: bool = True
    surface: Literal["intensity", "gradient"] = "intensity"


@dataclass(frozen=True)
class DefectMask:
    """Foreground mask of one defect inside its crop, plus where the crop sits in the frame."""

    mask: np.ndarray
    crop: np.ndarray
    threshold: int
    x_offset: int
    y_offset: int


def _as_ubyte(img: np.ndarray) -> np.ndarray:
    return img if img.dtype == np.uint8 else img_as_ubyte(img)


def otsu_threshold(img: np.ndarray) -> int:
    """
    Otsu threshold over the 256-bin histogram.

    The returned ``t`` splits pixels into ``< t`` and ``>= t``; it maximises the
    between-class variance, taking the smallest ``t`` on ties.

    Args:
        img (np.ndarray): uint8 image (floats in [0, 1] are rescaled).

    Returns:
        int: Threshold in 1..255.
    """
    values = _as_ubyte(img).ravel()
    if values.size == 0 or values.min() == values.max():
        raise DegenerateImageError("Otsu threshold is undefined for a constant image")

    hist = np.bincount(values, minlength=256).astype(float)
    levels = np.arange(256, dtype=float)
    # class 0 holds levels < t, so cumulate up to t - 1
    w0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(hist * levels)[:-1]
    w1 = hist.sum() - w0
    s1 = (hist * levels).sum() - s0

    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between[(w0 == 0) | (w1 == 0)] = -1.0
    return int(np.argmax(between)) + 1


def binarize(img: np.ndarray, threshold: int, dark_foreground: bool = True) -> np.ndarray:
    """Foreground mask; dark pixels (< threshold) are foreground unless ``dark_foreground`` is False."""
    values = _as_ubyte(img)
    return values < threshold if dark_foreground else values >= threshold


def morph_open(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Erosion then dilation with a 3x3 square, each applied ``iterations`` times."""
    if iterations < 1:
        raise ValueError(f"Opening needs at least one iteration, got {iterations}")
    return ndi.binary_opening(mask.astype(bool), structure=SQUARE_3X3, iterations=iterations)


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """
    Exact Euclidean distance from each foreground pixel to the nearest background pixel.

    Pixels beyond the image border count as background only when the mask
    has no background pixel at all.
    """
    mask = mask.astype(bool)
    if not mask.any():
        return np.zeros(mask.shape, dtype=float)
    if mask.all():
        padded = np.pad(mask, 1, constant_values=False)
        return ndi.distance_transform_edt(padded)[1:-1, 1:-1]
    return ndi.distance_transform_edt(mask)


def watershed(surface: np.ndarray, markers: np.ndarray) -> np.ndarray:
    """
    Meyer flooding of ``surface`` from labelled markers.

    Args:
        surface (np.ndarray): Relief to flood; low values fill first.
        markers (np.ndarray): int labels; 0 = unknown, 1 = background, >= 2 = objects.

    Returns:
        np.ndarray: Label image; pixels on watershed lines carry ``BOUNDARY_LABEL`` (0).
    """
    markers = np.asarray(markers)
    if markers.shape != surface.shape:
        raise ValueError(f"Markers shape {markers.shape} differs from image shape {surface.shape}")
    if not (markers > 0).any():
        raise ValueError("Watershed needs at least one positive marker label")
    if (markers > 0).all():
        return markers.astype(np.int32, copy=True)
    return skimage_watershed(surface, markers=markers.astype(np.int32), watershed_line=True)


def crop_bounds(box: BoundingBox, shape: Tuple[int, int], pad_px: int) -> Tuple[int, int, int, int]:
    height, width = shape
    x0 = max(int(np.floor(box.x_min)) - pad_px, 0)
    y0 = max(int(np.floor(box.y_min)) - pad_px, 0)
    x1 = min(int(np.ceil(box.x_max)) + pad_px, width)
    y1 = min(int(np.ceil(box.y_max)) + pad_px, height)
    if x1 - x0 < 2 or y1 - y0 < 2:
        raise SegmentationFailed(f"Box {box} leaves no crop inside a {width}x{height} frame")
    return x0, y0, x1, y1


def flooding_surface(crop: np.ndarray, params: SegmentParams) -> np.ndarray:
    # polarity-normalise so defects are bright, then invert: defects become basins
    values = _as_ubyte(crop).astype(float)
    basins = values if params.dark_foreground else 255.0 - values
    if params.surface == "gradient":
        return sobel(basins)
    return basins


def segment_defect(img: np.ndarray, box: BoundingBox, params: SegmentParams = SegmentParams()) -> DefectMask:
    """
    Segments the defect inside ``box`` with the marker-based watershed.

    Args:
        img (np.ndarray): Full grayscale frame.
        box (BoundingBox): Detection box in frame pixels.
        params (SegmentParams): Segmentation parameters.

    Returns:
        DefectMask: Foreground of the watershed region containing the crop centre.

    Raises:
        SegmentationFailed: Constant crop, empty foreground, or no object region.
    """
    x0, y0, x1, y1 = crop_bounds(box, img.shape[:2], params.pad_px)
    crop = _as_ubyte(img[y0:y1, x0:x1])

    try:
        threshold = otsu_threshold(crop)
    except DegenerateImageError as exc:
        raise SegmentationFailed(str(exc)) from exc

    opening = morph_open(binarize(crop, threshold, params.dark_foreground), params.open_iterations)
    if not opening.any():
        raise SegmentationFailed("Foreground vanished after opening")

    sure_background = ndi.binary_dilation(opening, structure=SQUARE_3X3, iterations=params.background_dilations)
    distance = distance_transform(opening)
    sure_foreground = distance >= params.sure_foreground_ratio * distance.max()
    unknown = sure_background & ~sure_foreground

    labels, _ = ndi.label(sure_foreground)
    markers = labels + BACKGROUND_LABEL
    markers[unknown] = 0

    regions = watershed(flooding_surface(crop, params), markers)

    cy, cx = (y1 - y0) // 2, (x1 - x0) // 2
    label = int(regions[cy, cx])
    if label <= BACKGROUND_LABEL:
        label = _nearest_object_label(regions, cx, cy)

    # the flooded region can spill onto the flat background; keep its thresholded part
    mask = _component_at((regions == label) & opening, cx, cy)
    return DefectMask(mask=mask, crop=crop, threshold=threshold, x_offset=x0, y_offset=y0)


def _nearest_object_label(regions: np.ndarray, cx: int, cy: int) -> int:
    ys, xs = np.nonzero(regions > BACKGROUND_LABEL)
    if ys.size == 0:
        raise SegmentationFailed("Watershed produced no object region")
    nearest = np.argmin((xs - cx) ** 2 + (ys - cy) ** 2)
    return int(regions[ys[nearest], xs[nearest]])


def _component_at(mask: np.ndarray, cx: int, cy: int) -> np.ndarray:
    """Connected component of ``mask`` under ``(cx, cy)``, else its largest component."""
    components, count = ndi.label(mask)
    if count == 0:
        raise SegmentationFailed("Selected watershed region holds no foreground")
    chosen = int(components[cy, cx])
    if chosen == 0:
        chosen = int(np.argmax(np.bincount(components.ravel())[1:])) + 1
    return components == chosen
