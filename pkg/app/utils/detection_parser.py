"""
Observation CSV files: detections, ground truth, segmented observations and trajectories.

Layout::

    # schema: defect-observations/1
    # detector: baseline-locator
    # calibration: 3f2a9c01d4e7
    frame,x_min,y_min,x_max,y_max,confidence,center_x,center_y,size_nm,fit_status
    120,10.0,12.5,19.0,21.5,0.93,14.5,17.0,3.348,ok

Boxes are in source-frame pixels. Floats are written with ``repr`` so a
written file reads back to identical values.
"""
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from geometry.boxes import BoundingBox
from geometry.observation import DefectObservation, group_by_frame
from tracking.linking import Trajectory
from utils.exceptions import InvalidBoxError, SchemaError
from utils.logger import SingletonLogger, log_exceptions

OBSERVATION_SCHEMA = "defect-observations/1"
REQUIRED_COLUMNS = ["frame", "x_min", "y_min", "x_max", "y_max"]
OPTIONAL_COLUMNS = ["confidence", "center_x", "center_y", "size_nm", "fit_status"]
TRAJECTORY_COLUMN = "trajectory_id"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str


@dataclass
class ObservationFile:
    header: Dict[str, str]
    frames: Dict[int, List[DefectObservation]] = field(default_factory=dict)
    trajectory_ids: Dict[int, List[int]] = field(default_factory=dict)  # frame -> id per observation
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def observation_count(self) -> int:
        return sum(len(v) for v in self.frames.values())


def _fmt(value: Optional[Union[float, int, str]]) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _opt_float(raw: str) -> Optional[float]:
    raw = raw.strip()
    return float(raw) if raw else None


def _parse_header_line(line: str) -> Optional[tuple]:
    body = line.lstrip("#").strip()
    if ":" not in body:
        return None
    key, value = body.split(":", 1)
    return key.strip(), value.strip()


class DetectionParser:
    """
    Reads and writes observation CSV files; malformed records are skipped and
    reported with their line numbers instead of failing the whole file.
    """

    def __init__(self):
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger

    def _parse_record(self, row: Dict[str, str]) -> tuple:
        frame_raw = row["frame"].strip()
        frame = int(frame_raw)
        if frame < 0:
            raise ValueError(f"negative frame {frame}")
        box = BoundingBox(*(float(row[c]) for c in REQUIRED_COLUMNS[1:]))

        cx, cy = box.center
        center_x = _opt_float(row.get("center_x") or "")
        center_y = _opt_float(row.get("center_y") or "")
        fit_status = (row.get("fit_status") or "").strip() or None
        obs = DefectObservation(
            frame=frame,
            box=box,
            center_x=cx if center_x is None else center_x,
            center_y=cy if center_y is None else center_y,
            confidence=_opt_float(row.get("confidence") or ""),
            size_nm=_opt_float(row.get("size_nm") or ""),
            fit_status=fit_status,
        )
        traj_raw = (row.get(TRAJECTORY_COLUMN) or "").strip()
        return obs, (int(traj_raw) if traj_raw else None)

    @log_exceptions("Failed to read observation file")
    def read_detections(self, path: Union[str, Path]) -> ObservationFile:
        """
        Parses an observation file.

        Args:
            path (str | Path): CSV file with a ``# schema:`` header.

        Returns:
            ObservationFile: Frame-grouped observations, header and diagnostics.

        Raises:
            SchemaError: Missing or unknown schema, or missing required columns.
            OSError: The file cannot be read.
        """
        path = Path(path)
        header: Dict[str, str] = {}
        columns: Optional[List[str]] = None
        observations: List[DefectObservation] = []
        traj_by_obs: List[Optional[int]] = []
        diagnostics: List[Diagnostic] = []

        with open(path, "r", encoding="utf-8", newline="") as f:
            lines = f.read().splitlines()

        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            if columns is None:
                if line.startswith("#"):
                    parsed = _parse_header_line(line)
                    if parsed:
                        header[parsed[0]] = parsed[1]
                    continue
                columns = [c.strip() for c in next(csv.reader([line]))]
                self._check_schema(path, header, columns)
                continue
            if line.startswith("#"):
                continue

            values = next(csv.reader([line]))
            if len(values) != len(columns):
                diagnostics.append(Diagnostic(line_no, f"expected {len(columns)} fields, got {len(values)}"))
                continue
            try:
                obs, traj_id = self._parse_record(dict(zip(columns, values)))
            except (ValueError, InvalidBoxError) as exc:
                diagnostics.append(Diagnostic(line_no, str(exc)))
                continue
            observations.append(obs)
            traj_by_obs.append(traj_id)

        if columns is None:
            self._check_schema(path, header, REQUIRED_COLUMNS)

        frames: Dict[int, List[DefectObservation]] = {}
        ids: Dict[int, List[int]] = {}
        for obs, traj_id in sorted(zip(observations, traj_by_obs), key=lambda pair: pair[0].frame):
            frames.setdefault(obs.frame, []).append(obs)
            if traj_id is not None:
                ids.setdefault(obs.frame, []).append(traj_id)

        for diag in diagnostics:
            self.logger.warning(f"⚠️ {path.name}:{diag.line}: {diag.message}; record skipped")
        self.logger.info(f"📄 Read {len(observations)} observations in {len(frames)} frames from {path}")
        return ObservationFile(header=header, frames=frames, trajectory_ids=ids, diagnostics=diagnostics)

    @staticmethod
    def _check_schema(path: Path, header: Mapping[str, str], columns: Sequence[str]) -> None:
        schema = header.get("schema")
        if schema is None:
            raise SchemaError(f"{path}: missing '# schema:' header line")
        if schema != OBSERVATION_SCHEMA:
            raise SchemaError(f"{path}: unknown schema '{schema}', expected '{OBSERVATION_SCHEMA}'")
        missing = [c for c in REQUIRED_COLUMNS if c not in columns]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")

    @log_exceptions("Failed to read trajectory file")
    def read_trajectories(self, path: Union[str, Path]) -> List[Trajectory]:
        """
        Reads a trajectory file back into trajectories; frames skipped inside a
        trajectory become its gaps.
        """
        parsed = self.read_detections(path)
        by_id: Dict[int, List[DefectObservation]] = {}
        for frame, obs_list in parsed.frames.items():
            ids = parsed.trajectory_ids.get(frame, [])
            if len(ids) != len(obs_list):
                raise SchemaError(f"{path}: frame {frame} has observations without '{TRAJECTORY_COLUMN}'")
            for traj_id, obs in zip(ids, obs_list):
                by_id.setdefault(traj_id, []).append(obs)

        trajectories = []
        for traj_id in sorted(by_id):
            obs_list = sorted(by_id[traj_id], key=lambda o: o.frame)
            present = {o.frame for o in obs_list}
            gaps = [f for f in range(obs_list[0].frame, obs_list[-1].frame + 1) if f not in present]
            trajectories.append(Trajectory(id=traj_id, observations=obs_list, gaps=gaps))
        return trajectories

    @staticmethod
    def _header_text(header: Mapping[str, object]) -> str:
        lines = [f"# schema: {OBSERVATION_SCHEMA}"]
        lines.extend(f"# {key}: {_fmt(header[key])}" for key in sorted(header) if key != "schema")
        return "\n".join(lines) + "\n"

    @staticmethod
    def _row(obs: DefectObservation) -> List[str]:
        return [
            str(obs.frame),
            *(_fmt(v) for v in obs.box.as_tuple()),
            _fmt(obs.confidence),
            _fmt(obs.center_x),
            _fmt(obs.center_y),
            _fmt(obs.size_nm),
            _fmt(obs.fit_status),
        ]

    def _write(self, path: Union[str, Path], header: Mapping[str, object], columns: List[str], rows: List[List[str]]) -> Path:
        path = Path(path)
        buffer = io.StringIO()
        buffer.write(self._header_text(header))
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buffer.getvalue(), encoding="utf-8")
        self.logger.info(f"💾 Wrote {len(rows)} observations to {path}")
        return path

    @log_exceptions("Failed to write observation file")
    def write_detections(
        self,
        path: Union[str, Path],
        frames: Mapping[int, Sequence[DefectObservation]],
        header: Optional[Mapping[str, object]] = None,
    ) -> Path:
        """
        Writes observations in frame order.

        Args:
            path (str | Path): Destination CSV.
            frames (Mapping[int, Sequence[DefectObservation]]): Observations per frame.
            header (Mapping[str, object] | None): Extra ``# key: value`` lines (detector, calibration, parameters).

        Returns:
            Path: The written file.
        """
        rows = [self._row(obs) for frame in sorted(frames) for obs in frames[frame]]
        return self._write(path, header or {}, REQUIRED_COLUMNS + OPTIONAL_COLUMNS, rows)

    @log_exceptions("Failed to write trajectory file")
    def write_trajectories(
        self,
        path: Union[str, Path],
        trajectories: Sequence[Trajectory],
        header: Optional[Mapping[str, object]] = None,
    ) -> Path:
        """Writes one row per observation, ordered by frame then trajectory id."""
        records = sorted(
            ((obs.frame, traj.id, obs) for traj in trajectories for obs in traj.observations),
            key=lambda item: (item[0], item[1]),
        )
        rows = [self._row(obs) + [str(traj_id)] for _, traj_id, obs in records]
        return self._write(path, header or {}, REQUIRED_COLUMNS + OPTIONAL_COLUMNS + [TRAJECTORY_COLUMN], rows)

    @log_exceptions("Failed to convert label export")
    def convert_labels(self, source: Union[str, Path], target: Union[str, Path], header: Optional[Mapping[str, object]] = None) -> Path:
        """
        Converts a plain box CSV into a ground-truth observation file.

        Two layouts are recognised by their column names:

        - ``frame,col_min,row_min,col_max,row_max``: inclusive pixel indices.
        - ImageJ ``Slice,BX,BY,Width,Height``: 1-based slice, top-left corner and size in px.
        """
        table = pd.read_csv(source)
        table.columns = [str(c).strip() for c in table.columns]
        boxes: List[DefectObservation] = []

        if {"frame", "col_min", "row_min", "col_max", "row_max"} <= set(table.columns):
            for row in table.itertuples(index=False):
                box = BoundingBox.from_pixel_indices(int(row.col_min), int(row.row_min), int(row.col_max), int(row.row_max))
                boxes.append(DefectObservation.from_box(int(row.frame), box))
        elif {"Slice", "BX", "BY", "Width", "Height"} <= set(table.columns):
            for row in table.itertuples(index=False):
                x, y = float(row.BX), float(row.BY)
                box = BoundingBox(x, y, x + float(row.Width), y + float(row.Height))
                boxes.append(DefectObservation.from_box(int(row.Slice) - 1, box))
        else:
            raise SchemaError(f"{source}: unrecognised label columns {list(table.columns)}")

        self.logger.info(f"🏷️ Converted {len(boxes)} labelled boxes from {source}")
        return self.write_detections(target, group_by_frame(boxes), {"detector": "labels", **(header or {})})
