"""
Physics-facing statistics over observations and trajectories: loop density,
size distributions, growth curves, effective diffusion and lifetimes.
"""
import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from geometry.boxes import BoundingBox
from geometry.matching import MetricsReport, greedy_match, metrics, pool_reports
from geometry.observation import DefectObservation
from models.locate import Locator
from physics.calibration import Calibration, frame_to_dpa
from preprocessing.noise import NoiseModel, add_noise
from tracking.linking import Trajectory
from utils.exceptions import DomainError, UndefinedDiffusionError

CM_TO_NM = 1e7


@dataclass(frozen=True)
class FrameStats:
    frame: int
    dpa: float
    raw_count: int
    corrected_density_cm3: float
    size_median_nm: float
    size_q1_nm: float
    size_q3_nm: float


@dataclass(frozen=True)
class DiffusionRecord:
    trajectory_id: int
    d_eff_nm2_per_s: float
    median_size_nm: float
    lifetime_frames: int


@dataclass(frozen=True)
class DiffusionBin:
    size_lo_nm: float
    size_hi_nm: float
    mean_d_eff: float
    sem_d_eff: float  # NaN when fewer than two records
    count: int


@dataclass(frozen=True)
class GrowthPoint:
    trajectory_id: int
    frame: int
    dpa: float
    size_nm: float


@dataclass
class GrowthCurve:
    trajectory_id: int
    points: List[GrowthPoint] = field(default_factory=list)
    skipped: int = 0  # observations without a size


@dataclass(frozen=True)
class DistributionDifference:
    mean_pct: float
    median_pct: float
    std_pct: float


@dataclass(frozen=True)
class RobustnessPoint:
    model: str
    magnitude: float
    report: MetricsReport


def loop_density(count: int, cal: Calibration) -> float:
    """Visibility-corrected number of loops per cm^3 of the imaged sample."""
    if count < 0:
        raise DomainError(f"Loop count must be non-negative, got {count}")
    return cal.visibility_factor * count / cal.sample_volume_cm3


def mean_spacing_nm(density_cm3: float) -> float:
    """Typical distance between loops, ``density ** (-1/3)``, in nm."""
    if density_cm3 <= 0:
        raise DomainError(f"Density must be positive, got {density_cm3}")
    return density_cm3 ** (-1.0 / 3.0) * CM_TO_NM


def size_stats(sizes_nm: Sequence[float]) -> Tuple[float, float, float]:
    """(Q1, median, Q3) by linear interpolation between order statistics."""
    if len(sizes_nm) == 0:
        raise ValueError("size_stats needs at least one size")
    q1, median, q3 = np.percentile(np.asarray(sizes_nm, dtype=float), [25, 50, 75], method="linear")
    return float(q1), float(median), float(q3)


def percent_difference_stats(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, float]:
    """
    Per-pair ``|a - b| / |b| * 100`` summarised as (max, mean, population std).

    Args:
        a (Sequence[float]): Measured values, e.g. per-frame medians from detections.
        b (Sequence[float]): Reference values of the same length, none zero.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if a_arr.shape != b_arr.shape or a_arr.size == 0:
        raise ValueError(f"Need two equal-length non-empty samples, got {a_arr.size} and {b_arr.size}")
    if np.any(b_arr == 0):
        raise ValueError("Reference values must be non-zero")
    pct = np.abs(a_arr - b_arr) / np.abs(b_arr) * 100.0
    return float(pct.max()), float(pct.mean()), float(pct.std(ddof=0))


def _pct(value: float, reference: float) -> float:
    if reference == 0:
        raise ValueError("Reference statistic is zero")
    return abs(value - reference) / abs(reference) * 100.0


def distribution_difference(a: Sequence[float], b: Sequence[float]) -> DistributionDifference:
    """Percent differences of mean, median and population std of sample ``a`` against ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Both samples must be non-empty")
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    return DistributionDifference(
        mean_pct=_pct(a_arr.mean(), b_arr.mean()),
        median_pct=_pct(float(np.median(a_arr)), float(np.median(b_arr))),
        std_pct=_pct(a_arr.std(ddof=0), b_arr.std(ddof=0)),
    )


def frame_stats(observations: Mapping[int, Sequence[DefectObservation]], cal: Calibration) -> List[FrameStats]:
    """
    Count, corrected density and size quartiles per frame.

    Frames without any sized observation report NaN quartiles.
    """
    rows = []
    for frame in sorted(observations):
        obs_list = observations[frame]
        sizes = [o.size_nm for o in obs_list if o.size_nm is not None]
        q1, median, q3 = size_stats(sizes) if sizes else (math.nan, math.nan, math.nan)
        rows.append(
            FrameStats(
                frame=frame,
                dpa=frame_to_dpa(frame, cal),
                raw_count=len(obs_list),
                corrected_density_cm3=loop_density(len(obs_list), cal),
                size_median_nm=median,
                size_q1_nm=q1,
                size_q3_nm=q3,
            )
        )
    return rows


def d_eff(traj: Trajectory, cal: Calibration, lag: int = 1) -> DiffusionRecord:
    """
    Effective 2-D diffusion coefficient: mean squared displacement over all
    pairs exactly ``lag`` frames apart, in nm^2, divided by ``4 * lag * tau``.

    Pairs straddling a memory gap are not ``lag`` frames apart and are ignored.

    Raises:
        UndefinedDiffusionError: The trajectory has no such pair.
    """
    if lag < 1:
        raise ValueError(f"Lag must be >= 1 frame, got {lag}")
    pairs = traj.lagged_pairs(lag)
    if not pairs:
        raise UndefinedDiffusionError(f"Trajectory {traj.id} has no displacement at lag {lag}")

    steps_px = np.array([(b.center_x - a.center_x, b.center_y - a.center_y) for a, b in pairs])
    msd_nm2 = float((steps_px ** 2).sum(axis=1).mean()) / cal.pixels_per_nm ** 2
    tau = lag * cal.seconds_per_frame

    sizes = [o.size_nm for o in traj.observations if o.size_nm is not None]
    return DiffusionRecord(
        trajectory_id=traj.id,
        d_eff_nm2_per_s=msd_nm2 / (4.0 * tau),
        median_size_nm=float(np.median(sizes)) if sizes else math.nan,
        lifetime_frames=traj.lifetime,
    )


def diffusion_records(trajectories: Sequence[Trajectory], cal: Calibration, lag: int = 1) -> Tuple[List[DiffusionRecord], int]:
    """D_eff for every trajectory where it is defined, plus the number skipped."""
    records, skipped = [], 0
    for traj in trajectories:
        try:
            records.append(d_eff(traj, cal, lag))
        except UndefinedDiffusionError:
            skipped += 1
    return records, skipped


def bin_edges(lo: float = 2.0, hi: float = 18.0, bins: int = 50) -> np.ndarray:
    if bins < 1:
        raise ValueError(f"Need at least one bin, got {bins}")
    if not hi > lo:
        raise ValueError(f"Upper edge {hi} must exceed lower edge {lo}")
    return np.linspace(lo, hi, bins + 1)


def bin_diffusion(records: Sequence[DiffusionRecord], lo: float = 2.0, hi: float = 18.0, bins: int = 50) -> List[DiffusionBin]:
    """
    Mean D_eff and standard deviation of the mean per median-size bin over ``[lo, hi)``.

    Records outside the range, or without a size, are left out.
    """
    edges = bin_edges(lo, hi, bins)
    members: List[List[float]] = [[] for _ in range(bins)]
    for rec in records:
        size = rec.median_size_nm
        if not (lo <= size < hi):
            continue
        idx = min(int(np.searchsorted(edges, size, side="right")) - 1, bins - 1)
        members[idx].append(rec.d_eff_nm2_per_s)

    result = []
    for i, values in enumerate(members):
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean()) if arr.size else math.nan
        sem = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
        result.append(DiffusionBin(float(edges[i]), float(edges[i + 1]), mean, sem, int(arr.size)))
    return result


def _inside(x: float, y: float, x_range: Tuple[float, float], y_range: Tuple[float, float]) -> bool:
    return x_range[0] <= x <= x_range[1] and y_range[0] <= y <= y_range[1]


def roi_filter(
    observations: Sequence[DefectObservation],
    x_range: Tuple[float, float],
    y_range: Tuple[float, float],
) -> List[DefectObservation]:
    """Observations whose centre lies in the closed rectangle ``x_range x y_range``."""
    if x_range[0] > x_range[1] or y_range[0] > y_range[1]:
        raise ValueError(f"Invalid ROI {x_range} x {y_range}")
    return [o for o in observations if _inside(o.center_x, o.center_y, x_range, y_range)]


def filter_trajectories_roi(
    trajectories: Sequence[Trajectory],
    x_range: Tuple[float, float],
    y_range: Tuple[float, float],
) -> List[Trajectory]:
    """Trajectories that stay inside the ROI for their whole life."""
    return [t for t in trajectories if len(roi_filter(t.observations, x_range, y_range)) == len(t.observations)]


def frame_window(trajectories: Sequence[Trajectory], first: int, last: int) -> List[Trajectory]:
    """Trajectories cut to frames ``[first, last]``; those left empty are dropped."""
    if first > last:
        raise ValueError(f"Empty frame window {first}..{last}")
    windowed = []
    for traj in trajectories:
        kept = [o for o in traj.observations if first <= o.frame <= last]
        if kept:
            gaps = [g for g in traj.gaps if kept[0].frame < g < kept[-1].frame]
            windowed.append(Trajectory(id=traj.id, observations=kept, gaps=gaps))
    return windowed


def growth_curve(traj: Trajectory, cal: Calibration) -> GrowthCurve:
    curve = GrowthCurve(trajectory_id=traj.id)
    for obs in traj.observations:
        if obs.size_nm is None:
            curve.skipped += 1
            continue
        curve.points.append(GrowthPoint(traj.id, obs.frame, frame_to_dpa(obs.frame, cal), obs.size_nm))
    return curve


def lifetime_stats(trajectories: Sequence[Trajectory]) -> Tuple[int, Optional[float]]:
    """Trajectory count and mean lifetime in frames; the mean is None for no trajectories."""
    if not trajectories:
        return 0, None
    return len(trajectories), float(np.mean([t.lifetime for t in trajectories]))


def extreme_trajectories(records: Sequence[DiffusionRecord], n: int) -> Tuple[List[DiffusionRecord], List[DiffusionRecord]]:
    """The ``n`` slowest and ``n`` fastest movers by D_eff (ties by trajectory id)."""
    ranked = sorted(records, key=lambda r: (r.d_eff_nm2_per_s, r.trajectory_id))
    fastest = sorted(records, key=lambda r: (-r.d_eff_nm2_per_s, r.trajectory_id))
    return ranked[:n], fastest[:n]


def _magnitude(model: NoiseModel) -> float:
    for name in ("variance", "amount", "peak"):
        if hasattr(model, name):
            return float(getattr(model, name))
    raise ValueError(f"Unsupported noise model: {model!r}")


def noise_robustness_sweep(
    frames: Mapping[int, np.ndarray],
    truths: Mapping[int, Sequence[BoundingBox]],
    levels: Sequence[NoiseModel],
    locator: Locator,
    cutoff_iou: float = 0.15,
    seed: int = 0,
) -> List[RobustnessPoint]:
    """
    Pooled detector metrics at one cutoff for every noise level.

    Each frame is corrupted with a seed derived from ``(seed, frame)`` and passed
    to ``locator``; detections are matched against the truth boxes of that frame.
    """
    points = []
    for model in levels:
        reports = []
        for frame in sorted(frames):
            noisy = add_noise(frames[frame], model, np.random.SeedSequence([seed, frame]))
            predicted = [o.box for o in locator.locate(noisy, frame)]
            reports.append(metrics(greedy_match(predicted, list(truths.get(frame, [])), cutoff_iou)))
        points.append(RobustnessPoint(type(model).__name__, _magnitude(model), pool_reports(reports, cutoff_iou)))
    return points
