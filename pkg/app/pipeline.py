from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from geometry.boxes import BoundingBox, nms
from geometry.matching import greedy_match, metrics, pool_reports
from geometry.observation import DefectObservation, group_by_frame
from imaging.segmentation import SegmentParams
from imaging.sizing import DefectSegmenter
from models.locate import BaselineLocator, LocateParams
from physics.calibration import Calibration
from postprocessing.analytics import (
    DiffusionBin,
    DiffusionRecord,
    FrameStats,
    GrowthPoint,
    bin_diffusion,
    diffusion_records,
    filter_trajectories_roi,
    frame_stats,
    frame_window,
    growth_curve,
    lifetime_stats,
    roi_filter,
)
from preprocessing.frames import FrameSequence
from preprocessing.noise import NoiseInjector, build_noise_model
from tracking.drift import DriftRow, apply_drift_correction, drift_table, estimate_drift
from tracking.linking import LinkParams, Trajectory, link
from utils.config import AppSettings, RunConfig
from utils.detection_parser import DetectionParser
from utils.file_utils import FileUtils
from utils.logger import SingletonLogger, log_exceptions
from utils.report_writer import ReportWriter

Range = Tuple[float, float]


@dataclass(frozen=True)
class EvaluationRow:
    scope: str  # "frame" or "pooled"
    frame: Optional[int]
    cutoff_iou: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    ties: int


class DefectAnalyticsApp:
    """
    Runs one pipeline stage per call; stages exchange data only through files
    written to ``config.output_dir``.
    """

    def __init__(self, settings: AppSettings, config: RunConfig, report_format: str = "csv"):
        self.settings = settings
        self.config = config
        self.report_format = report_format
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger
        self.calibration = self._resolve_calibration()
        self.output_dir = Path(config.output_dir)
        FileUtils.ensure_directories([self.output_dir])
        self.parser = DetectionParser()
        self.writer = ReportWriter()

    def _resolve_calibration(self) -> Calibration:
        path = self.config.calibration_path or (Path(self.settings.config_path) if self.settings.config_path else None)
        if path is None:
            self.logger.info("⚙️ Using built-in calibration defaults")
            return Calibration()
        self.logger.info(f"⚙️ Loading calibration from {path}")
        return Calibration.from_json(path)

    def _open_frames(self, frames_dir: Path) -> FrameSequence:
        frames = FrameSequence(frames_dir)
        size = frames.frame_size()
        if size is not None and not self.calibration.matches_frame(*size):
            self.logger.warning(
                f"⚠️ Frames are {size[0]}x{size[1]} px but the calibration describes "
                f"{self.calibration.image_width_px}x{self.calibration.image_height_px} px; nm values assume the latter"
            )
        return frames

    def _header(self, **params) -> Dict[str, object]:
        return {"calibration": self.calibration.config_hash(), "seed": self.config.seed, **params}

    def _report(self, records: Sequence, name: str, record_type: type, params: Mapping[str, object]) -> Path:
        path = self.output_dir / f"{name}.{self.report_format}"
        return self.writer.write_report(
            records, path, fmt=self.report_format, cal=self.calibration, params=params, record_type=record_type
        )

    @log_exceptions("Evaluation failed")
    def evaluate(
        self,
        predictions_path: Path,
        truths_path: Path,
        cutoffs: Sequence[float],
        nms_iou: Optional[float] = None,
    ) -> Path:
        """
        Scores detections against ground truth at every cutoff IoU, per frame and pooled.

        Args:
            predictions_path (Path): Detection file.
            truths_path (Path): Ground-truth file.
            cutoffs (Sequence[float]): Ascending cutoff IoU grid.
            nms_iou (float | None): Apply non-max suppression to predictions first.

        Returns:
            Path: The metrics report.
        """
        preds = self.parser.read_detections(predictions_path).frames
        truths = self.parser.read_detections(truths_path).frames
        if set(preds) != set(truths):
            self.logger.warning(
                f"⚠️ Frame sets differ ({len(preds)} predicted, {len(truths)} labelled); "
                f"evaluating {len(set(preds) & set(truths))} shared frames"
            )
        shared = sorted(set(preds) & set(truths))

        per_cutoff: Dict[float, list] = {c: [] for c in cutoffs}
        rows: List[EvaluationRow] = []
        for frame in shared:
            pred_boxes = self._suppress(preds[frame], nms_iou)
            truth_boxes = [o.box for o in truths[frame]]
            for cutoff in cutoffs:
                match = greedy_match(pred_boxes, truth_boxes, cutoff)
                report = metrics(match)
                per_cutoff[cutoff].append((report, match.ties))
                rows.append(EvaluationRow("frame", frame, cutoff, report.tp, report.fp, report.fn,
                                          report.precision, report.recall, report.f1, match.ties))

        for cutoff in cutoffs:
            pooled = pool_reports([r for r, _ in per_cutoff[cutoff]], cutoff)
            ties = sum(t for _, t in per_cutoff[cutoff])
            rows.append(EvaluationRow("pooled", None, cutoff, pooled.tp, pooled.fp, pooled.fn,
                                      pooled.precision, pooled.recall, pooled.f1, ties))
            self.logger.info(f"📈 cutoff {cutoff:.2f}: P={pooled.precision:.3f} R={pooled.recall:.3f} F1={pooled.f1:.3f}")

        params = {"cutoffs": list(cutoffs), "nms_iou": nms_iou, "predictions": Path(predictions_path).name,
                  "truths": Path(truths_path).name}
        return self._report(rows, "metrics", EvaluationRow, params)

    @staticmethod
    def _suppress(observations: Sequence[DefectObservation], nms_iou: Optional[float]) -> List[BoundingBox]:
        boxes = [o.box for o in observations]
        if nms_iou is None:
            return boxes
        scores = [1.0 if o.confidence is None else o.confidence for o in observations]
        return [boxes[i] for i in nms(boxes, scores, nms_iou)]

    @log_exceptions("Segmentation stage failed")
    def segment(self, frames_dir: Path, detections_path: Path, params: SegmentParams) -> Path:
        detections = self.parser.read_detections(detections_path)
        segmenter = DefectSegmenter(self.calibration, params)
        sized = segmenter.segment_sequence(self._open_frames(frames_dir), detections.frames, self.config.threads)
        header = self._header(
            detector=detections.header.get("detector", "unknown"),
            **{f"segment.{k}": v for k, v in params.model_dump().items()},
        )
        return self.parser.write_detections(self.output_dir / "observations.csv", sized, header)

    @log_exceptions("Tracking stage failed")
    def track(self, observations_path: Path, params: LinkParams, drift_correct: bool = False) -> Dict[str, Path]:
        """
        Links observations into trajectories and writes the trajectory file,
        the drift table and a lifetime summary.
        """
        frames = self.parser.read_detections(observations_path).frames
        self.logger.info(f"🔗 Linking {sum(len(v) for v in frames.values())} observations over {len(frames)} frames")
        trajectories = link(frames, params)
        drift = estimate_drift(trajectories, frames)
        if drift_correct:
            trajectories = apply_drift_correction(trajectories, drift)

        count, mean_lifetime = lifetime_stats(trajectories)
        self.logger.info(f"✅ {count} trajectories, mean lifetime {mean_lifetime} frames")

        link_params = {f"link.{k}": v for k, v in params.model_dump().items()}
        header = self._header(drift_corrected=drift_correct, **link_params)
        summary = {
            "trajectory_count": count,
            "mean_lifetime_frames": mean_lifetime,
            "drift_corrected": drift_correct,
            "calibration_hash": self.calibration.config_hash(),
            "parameters": params.model_dump(),
        }
        return {
            "trajectories": self.parser.write_trajectories(self.output_dir / "trajectories.csv", trajectories, header),
            "drift": self._report(drift_table(drift), "drift", DriftRow, {**link_params, "drift_corrected": drift_correct}),
            "summary": FileUtils.write_json(self.output_dir / "track_summary.json", summary),
        }

    @log_exceptions("Analysis stage failed")
    def analyze(
        self,
        trajectories_path: Path,
        roi: Optional[Tuple[Range, Range]] = None,
        bins: Tuple[float, float, int] = (2.0, 18.0, 50),
        window: Optional[Tuple[int, int]] = None,
        lag: int = 1,
    ) -> Dict[str, Path]:
        """
        Frame statistics, growth curves and the binned D_eff histogram.

        Returns:
            Dict[str, Path]: Written report per output name.
        """
        trajectories: List[Trajectory] = self.parser.read_trajectories(trajectories_path)
        if window is not None:
            trajectories = frame_window(trajectories, *window)

        # per-frame counts use every observation inside the ROI; per-trajectory
        # quantities only trajectories that never leave it
        observations = [o for t in trajectories for o in t.observations]
        if roi is not None:
            observations = roi_filter(observations, *roi)
            trajectories = filter_trajectories_roi(trajectories, *roi)
        if not trajectories:
            self.logger.warning("⚠️ No trajectories to analyse; writing header-only reports")

        stats = frame_stats(group_by_frame(observations), self.calibration)
        curves = [growth_curve(t, self.calibration) for t in trajectories]
        growth = [p for curve in curves for p in curve.points]
        unsized = sum(curve.skipped for curve in curves)
        if unsized:
            self.logger.warning(f"⚠️ {unsized} observations have no size; left out of the growth curves")
        records, skipped = diffusion_records(trajectories, self.calibration, lag)
        if skipped:
            self.logger.info(f"ℹ️ {skipped} trajectories have no lag-{lag} step; D_eff undefined")
        lo, hi, n_bins = bins
        histogram = bin_diffusion(records, lo, hi, n_bins)

        params = {"roi": [list(r) for r in roi] if roi else None, "bins": [lo, hi, n_bins],
                  "window": list(window) if window else None, "lag": lag}
        return {
            "frame_stats": self._report(stats, "frame_stats", FrameStats, params),
            "growth_curves": self._report(growth, "growth_curves", GrowthPoint, params),
            "diffusion_histogram": self._report(histogram, "diffusion_histogram", DiffusionBin, params),
            "diffusion_records": self._report(records, "diffusion_records", DiffusionRecord, params),
        }

    @log_exceptions("Noise injection stage failed")
    def noise(self, frames_dir: Path, model_name: str, model_params: Mapping[str, float]) -> Dict[int, Path]:
        model = build_noise_model(model_name, model_params)
        injector = NoiseInjector(model, self.config.seed)
        return injector.corrupt_directory(frames_dir, self.output_dir, self.config.threads)

    @log_exceptions("Locate stage failed")
    def locate(self, frames_dir: Path, params: LocateParams) -> Path:
        locator = BaselineLocator(params, dark_foreground=self.settings.dark_foreground)
        located = locator.locate_sequence(self._open_frames(frames_dir), self.config.threads)
        header = self._header(detector="baseline-locator", **{f"locate.{k}": v for k, v in params.model_dump().items()})
        return self.parser.write_detections(self.output_dir / "detections.csv", located, header)

    @log_exceptions("Label conversion failed")
    def convert_labels(self, source: Path) -> Path:
        return self.parser.convert_labels(source, self.output_dir / "ground_truth.csv", self._header())
