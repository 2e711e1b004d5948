"""
Global drift: the median displacement of all linked particles between
consecutive frames, accumulated from the first frame.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from tracking.linking import Trajectory

Drift = Dict[int, Tuple[float, float]]


def estimate_drift(trajectories: Sequence[Trajectory], frames: Optional[Iterable[int]] = None) -> Drift:
    """
    Cumulative drift per frame, ``(0, 0)`` at the first frame.

    Each transition between consecutive frames contributes the component-wise
    median displacement over trajectories observed in both frames, or 0 when
    no trajectory spans it.

    Args:
        trajectories (Sequence[Trajectory]): Linked trajectories.
        frames (Iterable[int] | None): Frames to cover; defaults to every frame observed.

    Returns:
        Drift: frame -> cumulative (dx, dy) in px.
    """
    positions: Dict[int, Dict[int, Tuple[float, float]]] = {}
    for traj in trajectories:
        for obs in traj.observations:
            positions.setdefault(obs.frame, {})[traj.id] = (obs.center_x, obs.center_y)

    timeline = sorted(set(frames) if frames is not None else positions)
    if not timeline:
        return {}

    drift: Drift = {timeline[0]: (0.0, 0.0)}
    total_x = total_y = 0.0
    for prev, cur in zip(timeline, timeline[1:]):
        before = positions.get(prev, {})
        after = positions.get(cur, {})
        shared = sorted(before.keys() & after.keys())
        if shared:
            steps = np.array([(after[t][0] - before[t][0], after[t][1] - before[t][1]) for t in shared])
            dx, dy = np.median(steps, axis=0)
            total_x += float(dx)
            total_y += float(dy)
        drift[cur] = (total_x, total_y)
    return drift


def apply_drift_correction(trajectories: Sequence[Trajectory], drift: Mapping[int, Tuple[float, float]]) -> List[Trajectory]:
    """
    Subtracts the cumulative drift from every position and box.

    Raises:
        ValueError: A trajectory frame is absent from ``drift``.
    """
    missing = sorted({obs.frame for traj in trajectories for obs in traj.observations} - set(drift))
    if missing:
        raise ValueError(f"Drift table has no entry for frames {missing}")
    return [
        Trajectory(
            id=traj.id,
            observations=[obs.shifted(-drift[obs.frame][0], -drift[obs.frame][1]) for obs in traj.observations],
            gaps=list(traj.gaps),
        )
        for traj in trajectories
    ]


@dataclass(frozen=True)
class DriftRow:
    frame: int
    dx_px: float
    dy_px: float


def drift_table(drift: Mapping[int, Tuple[float, float]]) -> List[DriftRow]:
    return [DriftRow(frame, dx, dy) for frame, (dx, dy) in sorted(drift.items())]
