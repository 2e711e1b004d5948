import math

import numpy as np
import pytest

from geometry.boxes import BoundingBox
from geometry.observation import DefectObservation
from models.locate import Locator
from physics.calibration import frame_to_dpa
from postprocessing.analytics import (
    DiffusionRecord,
    bin_diffusion,
    bin_edges,
    d_eff,
    diffusion_records,
    distribution_difference,
    extreme_trajectories,
    filter_trajectories_roi,
    frame_stats,
    frame_window,
    growth_curve,
    lifetime_stats,
    loop_density,
    mean_spacing_nm,
    noise_robustness_sweep,
    percent_difference_stats,
    roi_filter,
    size_stats,
)
from preprocessing.noise import GaussianNoise, SaltPepperNoise
from synthetic import observation_at, random_walk
from tracking.linking import Trajectory
from utils.exceptions import DomainError, UndefinedDiffusionError


def _trajectory(points, traj_id=0, start_frame=0, sizes=None):
    sizes = sizes or [None] * len(points)
    observations = [observation_at(start_frame + i, x, y, size_nm=s) for i, ((x, y), s) in enumerate(zip(points, sizes))]
    return Trajectory(traj_id, observations)


# densities


def test_loop_density(cal):
    assert loop_density(0, cal) == 0.0
    assert loop_density(100, cal) == pytest.approx(2.1216e16, rel=0.01)
    assert loop_density(300, cal) == pytest.approx(3 * loop_density(100, cal))
    with pytest.raises(DomainError):
        loop_density(-1, cal)


def test_mean_spacing():
    assert mean_spacing_nm(3e16) == pytest.approx(32.18, abs=0.01)
    with pytest.raises(DomainError):
        mean_spacing_nm(0.0)


# size distributions


def test_size_stats():
    assert size_stats([5.0]) == (5.0, 5.0, 5.0)
    assert size_stats([1, 2, 3, 4, 5]) == (2.0, 3.0, 4.0)
    with pytest.raises(ValueError):
        size_stats([])


def test_size_stats_matches_linear_interpolation(rng):
    for n in range(2, 30):
        values = rng.uniform(2, 18, size=n)
        ordered = np.sort(values)

        def quantile(q):
            pos = q * (n - 1)
            lo = int(math.floor(pos))
            hi = min(lo + 1, n - 1)
            return ordered[lo] + (pos - lo) * (ordered[hi] - ordered[lo])

        assert size_stats(values) == pytest.approx((quantile(0.25), quantile(0.5), quantile(0.75)))


def test_percent_difference_stats():
    assert percent_difference_stats([110.0], [100.0]) == pytest.approx((10.0, 10.0, 0.0))
    max_pct, mean_pct, std_pct = percent_difference_stats([90.0, 130.0], [100.0, 100.0])
    assert (max_pct, mean_pct, std_pct) == pytest.approx((30.0, 20.0, 10.0))
    with pytest.raises(ValueError):
        percent_difference_stats([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        percent_difference_stats([1.0], [0.0])


def test_distribution_difference():
    diff = distribution_difference([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
    assert (diff.mean_pct, diff.median_pct, diff.std_pct) == pytest.approx((100.0, 100.0, 100.0))
    with pytest.raises(ValueError):
        distribution_difference([], [1.0])


def test_frame_stats(cal):
    frames = {
        3: [observation_at(3, 10, 10)],
        0: [observation_at(0, 10, 10, size_nm=s) for s in (5.0, 6.0, 7.0)],
    }
    rows = frame_stats(frames, cal)
    assert [r.frame for r in rows] == [0, 3]
    assert rows[0].raw_count == 3
    assert rows[0].corrected_density_cm3 == pytest.approx(loop_density(3, cal))
    assert (rows[0].size_q1_nm, rows[0].size_median_nm, rows[0].size_q3_nm) == (5.5, 6.0, 6.5)
    assert rows[1].dpa == pytest.approx(frame_to_dpa(3, cal))
    assert math.isnan(rows[1].size_median_nm)


# diffusion


def test_stationary_trajectory_has_zero_diffusion(cal):
    assert d_eff(_trajectory([(20.0, 20.0)] * 10), cal).d_eff_nm2_per_s == 0.0


def test_single_step_diffusion(unit_cal):
    record = d_eff(_trajectory([(0.0, 0.0), (3.0, 4.0)], sizes=[4.0, 6.0]), unit_cal)
    assert record.d_eff_nm2_per_s == pytest.approx(25.0 / (4 * 1.75))
    assert record.median_size_nm == 5.0
    assert record.lifetime_frames == 2


def test_diffusion_scales_with_pixel_size(cal, unit_cal):
    traj = _trajectory([(0.0, 0.0), (3.0, 4.0)])
    assert d_eff(traj, cal).d_eff_nm2_per_s == pytest.approx(
        d_eff(traj, unit_cal).d_eff_nm2_per_s / cal.pixels_per_nm ** 2
    )


def test_random_walk_diffusion(cal):
    step_std = 1.5
    expected = step_std ** 2 / cal.pixels_per_nm ** 2 / (2 * cal.seconds_per_frame)
    for seed in range(20):
        path = random_walk(np.random.default_rng(seed), 2000, step_std, start=(500.0, 500.0))
        estimate = d_eff(_trajectory(path), cal).d_eff_nm2_per_s
        assert estimate == pytest.approx(expected, rel=0.15)


def test_diffusion_lag(unit_cal):
    traj = _trajectory([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    assert d_eff(traj, unit_cal, lag=2).d_eff_nm2_per_s == pytest.approx(4.0 / (4 * 2 * 1.75))
    with pytest.raises(ValueError):
        d_eff(traj, unit_cal, lag=0)


def test_single_observation_has_undefined_diffusion(cal):
    with pytest.raises(UndefinedDiffusionError):
        d_eff(_trajectory([(5.0, 5.0)]), cal)


def test_gap_straddling_pairs_are_ignored(unit_cal):
    observations = [observation_at(0, 0.0, 0.0), observation_at(1, 1.0, 0.0), observation_at(4, 50.0, 0.0)]
    traj = Trajectory(0, observations, gaps=[2, 3])
    assert d_eff(traj, unit_cal).d_eff_nm2_per_s == pytest.approx(1.0 / (4 * 1.75))

    lone_pairs = Trajectory(1, [observation_at(0, 0.0, 0.0), observation_at(2, 9.0, 0.0)], gaps=[1])
    with pytest.raises(UndefinedDiffusionError):
        d_eff(lone_pairs, unit_cal)


def test_diffusion_records_counts_skipped(cal):
    trajectories = [_trajectory([(1.0, 1.0)], traj_id=0), _trajectory([(1.0, 1.0), (2.0, 1.0)], traj_id=1)]
    records, skipped = diffusion_records(trajectories, cal)
    assert [r.trajectory_id for r in records] == [1]
    assert skipped == 1


# binning


def _record(size, value, traj_id=0):
    return DiffusionRecord(trajectory_id=traj_id, d_eff_nm2_per_s=value, median_size_nm=size, lifetime_frames=2)


def test_default_bins_are_0_32_nm_wide():
    edges = bin_edges()
    assert len(edges) == 51
    assert np.diff(edges) == pytest.approx(np.full(50, 0.32))
    with pytest.raises(ValueError):
        bin_edges(2.0, 2.0, 10)


def test_bin_diffusion():
    records = [_record(2.1, 1.0), _record(2.2, 3.0), _record(10.0, 5.0), _record(17.99, 7.0),
               _record(18.0, 100.0), _record(1.0, 100.0), _record(math.nan, 100.0)]
    bins = bin_diffusion(records)
    assert len(bins) == 50
    assert bins[0].count == 2 and bins[0].mean_d_eff == 2.0
    assert bins[0].sem_d_eff == pytest.approx(np.std([1.0, 3.0], ddof=1) / math.sqrt(2))
    assert bins[-1].count == 1 and math.isnan(bins[-1].sem_d_eff)
    assert sum(b.count for b in bins) == 4
    assert bins[0].size_lo_nm == 2.0 and bins[-1].size_hi_nm == 18.0


def test_bin_diffusion_without_records():
    bins = bin_diffusion([], 0.0, 1.0, 4)
    assert [b.count for b in bins] == [0, 0, 0, 0]
    assert all(math.isnan(b.mean_d_eff) for b in bins)


# selections


def test_roi_filter_is_closed():
    observations = [observation_at(0, x, 5.0) for x in (9.0, 10.0, 15.0, 20.0, 21.0)]
    kept = roi_filter(observations, (10.0, 20.0), (0.0, 5.0))
    assert [o.center_x for o in kept] == [10.0, 15.0, 20.0]
    with pytest.raises(ValueError):
        roi_filter(observations, (20.0, 10.0), (0.0, 5.0))


def test_trajectory_roi_needs_whole_life_inside():
    inside = _trajectory([(12.0, 12.0), (13.0, 12.0)], traj_id=0)
    leaving = _trajectory([(12.0, 12.0), (25.0, 12.0)], traj_id=1)
    assert [t.id for t in filter_trajectories_roi([inside, leaving], (10.0, 20.0), (10.0, 20.0))] == [0]


def test_frame_window():
    observations = [observation_at(f, 10.0, 10.0) for f in (0, 1, 4, 5, 6)]
    traj = Trajectory(7, observations, gaps=[2, 3])
    cut = frame_window([traj, _trajectory([(1.0, 1.0)], traj_id=8, start_frame=20)], 1, 5)
    assert len(cut) == 1
    assert cut[0].id == 7 and cut[0].frames == [1, 4, 5] and cut[0].gaps == [2, 3]
    assert frame_window([traj], 5, 6)[0].gaps == []


def test_growth_curve(cal):
    traj = _trajectory([(5.0, 5.0)] * 3, traj_id=4, start_frame=10, sizes=[4.0, None, 6.0])
    curve = growth_curve(traj, cal)
    assert curve.skipped == 1
    assert [(p.frame, p.size_nm) for p in curve.points] == [(10, 4.0), (12, 6.0)]
    assert curve.points[0].dpa == pytest.approx(frame_to_dpa(10, cal))


def test_lifetime_stats():
    long_lived = Trajectory(0, [observation_at(461, 5.0, 5.0), observation_at(805, 5.0, 5.0)], gaps=list(range(462, 805)))
    assert long_lived.lifetime == 345
    assert lifetime_stats([long_lived, _trajectory([(1.0, 1.0)])]) == (2, 173.0)
    assert lifetime_stats([]) == (0, None)


def test_extreme_trajectories():
    records = [_record(5.0, v, i) for i, v in enumerate([3.0, 1.0, 9.0, 1.0, 5.0])]
    slowest, fastest = extreme_trajectories(records, 2)
    assert [r.trajectory_id for r in slowest] == [1, 3]
    assert [r.trajectory_id for r in fastest] == [2, 4]


# noise robustness


class DarkestPixelLocator(Locator):
    def locate(self, img, frame):
        row, col = np.unravel_index(int(np.argmin(img)), img.shape)
        box = BoundingBox.from_pixel_indices(col - 3, row - 3, col + 3, row + 3)
        return [DefectObservation.from_box(frame, box)]


def test_noise_robustness_sweep():
    frames, truths = {}, {}
    for frame in range(5):
        img = np.full((40, 40), 200, dtype=np.uint8)
        img[20, 10 + 4 * frame] = 0
        frames[frame] = img
        truths[frame] = [BoundingBox.from_pixel_indices(7 + 4 * frame, 17, 13 + 4 * frame, 23)]

    levels = [GaussianNoise(0.0), SaltPepperNoise(0.5)]
    points = noise_robustness_sweep(frames, truths, levels, DarkestPixelLocator(), seed=3)
    assert [(p.model, p.magnitude) for p in points] == [("GaussianNoise", 0.0), ("SaltPepperNoise", 0.5)]
    assert points[0].report.tp == 5 and points[0].report.f1 == 1.0
    assert points[1].report.tp == 0 and points[1].report.fp == 5

    again = noise_robustness_sweep(frames, truths, levels, DarkestPixelLocator(), seed=3)
    assert again == points
