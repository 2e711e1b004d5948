import numpy as np
import pytest
from scipy import ndimage as ndi

from geometry.boxes import BoundingBox
from imaging.segmentation import (
    BOUNDARY_LABEL,
    SegmentParams,
    binarize,
    crop_bounds,
    distance_transform,
    morph_open,
    otsu_threshold,
    segment_defect,
    watershed,
)
from synthetic import disk_box, disk_coverage, disk_frame
from utils.exceptions import DegenerateImageError, SegmentationFailed


def exhaustive_otsu(img):
    """Tries every split t (classes < t and >= t) and keeps the first best."""
    values = img.ravel().astype(np.int64)
    total_n, total_s = values.size, int(values.sum())
    best_t, best = None, -1.0
    for t in range(1, 256):
        below = values[values < t]
        n0, s0 = below.size, int(below.sum())
        n1, s1 = total_n - n0, total_s - s0
        if n0 == 0 or n1 == 0:
            continue
        n0f, n1f = float(n0), float(n1)
        between = n0f * n1f * (s0 / n0f - s1 / n1f) ** 2
        if between > best:
            best_t, best = t, between
    return best_t


def test_otsu_matches_exhaustive_search():
    rng = np.random.default_rng(99)
    for i in range(100):
        if i % 2:
            lo, hi = sorted(rng.integers(0, 256, size=2))
            img = rng.integers(lo, hi + 2, size=(64, 64)).clip(0, 255).astype(np.uint8)
        else:
            dark = rng.normal(rng.uniform(20, 100), rng.uniform(3, 30), size=(64, 64))
            bright = rng.normal(rng.uniform(120, 230), rng.uniform(3, 30), size=(64, 64))
            img = np.where(rng.random((64, 64)) < rng.uniform(0.1, 0.9), dark, bright)
            img = np.round(img).clip(0, 255).astype(np.uint8)
        if img.min() == img.max():
            continue
        assert otsu_threshold(img) == exhaustive_otsu(img)


def test_otsu_separates_two_levels():
    img = np.full((10, 10), 50, dtype=np.uint8)
    img[:, 5:] = 200
    assert 50 < otsu_threshold(img) <= 200


def test_otsu_binarization_recovers_bright_square():
    img = np.full((30, 30), 40, dtype=np.uint8)
    img[8:18, 11:21] = 220
    mask = binarize(img, otsu_threshold(img), dark_foreground=False)
    assert np.array_equal(mask, img == 220)
    assert np.array_equal(binarize(img, otsu_threshold(img)), img == 40)


def test_otsu_rejects_constant_image():
    with pytest.raises(DegenerateImageError):
        otsu_threshold(np.full((8, 8), 17, dtype=np.uint8))


def test_opening_cases():
    assert not morph_open(np.zeros((10, 10), dtype=bool)).any()

    speck = np.zeros((10, 10), dtype=bool)
    speck[4, 4] = True
    assert not morph_open(speck).any()

    square = np.zeros((20, 20), dtype=bool)
    square[5:15, 5:15] = True
    assert np.array_equal(morph_open(square), square)

    with pytest.raises(ValueError):
        morph_open(square, iterations=0)


def brute_force_distance(mask):
    fg = np.argwhere(mask)
    bg = np.argwhere(~mask)
    out = np.zeros(mask.shape)
    for r, c in fg:
        out[r, c] = np.sqrt(((bg - (r, c)) ** 2).sum(axis=1)).min()
    return out


def test_distance_transform_cases(rng):
    assert not distance_transform(np.zeros((6, 6), dtype=bool)).any()

    single = np.zeros((5, 5), dtype=bool)
    single[2, 2] = True
    assert distance_transform(single)[2, 2] == 1.0

    stripe = np.zeros((9, 12), dtype=bool)
    stripe[2:7, :] = True
    assert distance_transform(stripe)[4, 6] == 3.0

    blob = rng.random((12, 12)) < 0.6
    np.testing.assert_allclose(distance_transform(blob), brute_force_distance(blob))


def test_distance_transform_of_full_mask_measures_to_the_border():
    full = np.ones((5, 7), dtype=bool)
    dist = distance_transform(full)
    assert dist[0, 0] == 1.0
    assert dist[2, 3] == 3.0


def test_watershed_object_and_background():
    img = disk_frame((24, 24), [(12.0, 12.0, 5.0)])
    markers = np.zeros(img.shape, dtype=np.int32)
    markers[0, :] = markers[-1, :] = markers[:, 0] = markers[:, -1] = 1
    markers[12, 12] = 2
    out = watershed(img.astype(float), markers)
    assert set(np.unique(out)) <= {BOUNDARY_LABEL, 1, 2}
    assert out[12, 12] == 2 and out[0, 0] == 1
    assert np.all(out[markers > 0] == markers[markers > 0])


def test_watershed_splits_touching_disks():
    img = disk_frame((32, 44), [(16.0, 16.0, 6.0), (28.0, 16.0, 6.0)]).astype(float)
    markers = np.zeros(img.shape, dtype=np.int32)
    markers[0, :] = markers[-1, :] = markers[:, 0] = markers[:, -1] = 1
    markers[15, 15] = 2
    markers[15, 27] = 3
    out = watershed(img, markers)
    assert out[15, 15] == 2 and out[15, 27] == 3
    assert (out == BOUNDARY_LABEL).any()
    cols = np.nonzero(out == 2)[1], np.nonzero(out == 3)[1]
    assert cols[0].mean() < cols[1].mean()
    # the watershed line keeps the two regions from touching
    assert not ((out[:, :-1] == 2) & (out[:, 1:] == 3)).any()
    assert not ((out[:-1, :] == 2) & (out[1:, :] == 3)).any()
    assert not ((out[:-1, :] == 3) & (out[1:, :] == 2)).any()


def test_watershed_with_tiling_markers_returns_them():
    markers = np.ones((6, 6), dtype=np.int32)
    markers[:, 3:] = 2
    assert np.array_equal(watershed(np.zeros((6, 6)), markers), markers)


def test_watershed_argument_errors():
    with pytest.raises(ValueError):
        watershed(np.zeros((4, 4)), np.zeros((4, 4), dtype=np.int32))
    with pytest.raises(ValueError):
        watershed(np.zeros((4, 4)), np.ones((3, 3), dtype=np.int32))


def _in_frame(result, shape):
    frame_mask = np.zeros(shape, dtype=bool)
    h, w = result.mask.shape
    frame_mask[result.y_offset:result.y_offset + h, result.x_offset:result.x_offset + w] = result.mask
    return frame_mask


def test_segment_defect_recovers_disk():
    disk = (20.0, 20.0, 6.0)
    img = disk_frame((40, 40), [disk])
    result = segment_defect(img, disk_box(*disk))
    frame_mask = _in_frame(result, img.shape)

    coverage = disk_coverage(img.shape, [disk])
    core = ndi.binary_erosion(coverage > 0.99)
    assert np.all(frame_mask[core])
    assert not np.any(frame_mask & ~ndi.binary_dilation(coverage > 0.01))


def test_segment_defect_excludes_neighbouring_disk():
    near, far = (20.0, 20.0, 6.0), (35.0, 20.0, 6.0)
    img = disk_frame((40, 48), [near, far])
    result = segment_defect(img, disk_box(*near))
    ys, xs = np.nonzero(result.mask)
    assert (xs + result.x_offset).max() < 28


def test_segment_defect_on_uniform_crop_fails():
    img = np.full((30, 30), 180, dtype=np.uint8)
    with pytest.raises(SegmentationFailed):
        segment_defect(img, BoundingBox(10, 10, 20, 20))


@pytest.mark.parametrize("surface", ["intensity", "gradient"])
def test_bright_polarity_and_gradient_surface(surface):
    disk = (20.0, 20.0, 6.0)
    img = 255 - disk_frame((40, 40), [disk])
    result = segment_defect(img, disk_box(*disk), SegmentParams(dark_foreground=False, surface=surface))
    frame_mask = _in_frame(result, img.shape)
    coverage = disk_coverage(img.shape, [disk])
    assert np.all(frame_mask[ndi.binary_erosion(coverage > 0.99, iterations=2)])
    assert not np.any(frame_mask & ~ndi.binary_dilation(coverage > 0.01))


def test_crop_bounds_clamp_and_reject():
    assert crop_bounds(BoundingBox(1, 2, 8, 9), (20, 20), 4) == (0, 0, 12, 13)
    with pytest.raises(SegmentationFailed):
        crop_bounds(BoundingBox(-10, -10, -5, -5), (20, 20), 2)
