import numpy as np
import pytest

from synthetic import track_frames
from tracking.drift import apply_drift_correction, drift_table, estimate_drift
from tracking.linking import LinkParams, link


def _link(paths):
    return link(track_frames(paths), LinkParams(search_range_px=8.0))


def test_stationary_scene_has_zero_drift():
    trajectories = _link([[(10.0, 10.0)] * 6, [(40.0, 25.0)] * 6])
    assert estimate_drift(trajectories) == {f: (0.0, 0.0) for f in range(6)}


def _rigid_scene(n_frames=10):
    starts = [(10.0, 50.0), (30.0, 80.0), (60.0, 55.0), (90.0, 70.0)]
    return [[(x + 2.0 * f, y - 1.0 * f) for f in range(n_frames)] for x, y in starts]


def test_rigid_translation_is_recovered_and_removed():
    trajectories = _link(_rigid_scene())
    drift = estimate_drift(trajectories)
    assert drift == {f: pytest.approx((2.0 * f, -1.0 * f), abs=1e-9) for f in range(10)}

    corrected = apply_drift_correction(trajectories, drift)
    for traj in corrected:
        positions = traj.positions()
        assert np.abs(positions - positions[0]).max() < 1e-9
        first = traj.observations[0]
        assert first.box.center == pytest.approx((first.center_x, first.center_y))

    residual = estimate_drift(corrected)
    assert all(abs(dx) < 1e-9 and abs(dy) < 1e-9 for dx, dy in residual.values())


def test_median_ignores_a_single_mover():
    stationary = [[(10.0 + 20 * k, 30.0)] * 8 for k in range(4)]
    mover = [[(40.0 + 3.0 * f, 60.0) for f in range(8)]]
    drift = estimate_drift(_link(stationary + mover))
    assert all(abs(dx) < 1e-9 and abs(dy) < 1e-9 for dx, dy in drift.values())


def test_transitions_without_shared_trajectories_add_nothing():
    paths = {0: [(5.0, 5.0)], 1: [(6.0, 5.0)], 3: [(50.0, 50.0)], 4: [(52.0, 50.0)]}
    frames = {}
    for frame, points in paths.items():
        frames.update(track_frames([points], start_frame=frame))
    trajectories = link(frames, LinkParams(search_range_px=5.0, memory_frames=0))
    drift = estimate_drift(trajectories, frames=range(5))
    assert drift == {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (1.0, 0.0), 3: (1.0, 0.0), 4: (3.0, 0.0)}


def test_zero_drift_leaves_trajectories_unchanged():
    trajectories = _link(_rigid_scene(4))
    corrected = apply_drift_correction(trajectories, {f: (0.0, 0.0) for f in range(4)})
    assert [t.observations for t in corrected] == [t.observations for t in trajectories]


def test_missing_drift_frame_is_an_argument_error():
    trajectories = _link(_rigid_scene(4))
    with pytest.raises(ValueError):
        apply_drift_correction(trajectories, {0: (0.0, 0.0), 1: (0.0, 0.0)})


def test_drift_table_rows_in_frame_order():
    rows = drift_table({2: (1.0, 0.5), 0: (0.0, 0.0)})
    assert [(r.frame, r.dx_px, r.dy_px) for r in rows] == [(0, 0.0, 0.0), (2, 1.0, 0.5)]
