"""
CSV / JSON report files for frame statistics, detector metrics, diffusion
records and the other tabular outputs.

Every report starts with a header that echoes the calibration and all run
parameters, so a file is enough to reproduce itself. Output contains no
timestamps: identical inputs give byte-identical files.
"""
import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from physics.calibration import Calibration
from utils.exceptions import SchemaError
from utils.logger import SingletonLogger, log_exceptions

REPORT_SCHEMA = "defect-report/1"
FLOAT_FORMAT = "%.9g"
REPORT_FORMATS = ("csv", "json")


def round_sig(value: Any) -> Any:
    """Floats to 9 significant digits, NaN/inf to None, numpy integers to int; everything else unchanged."""
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return None
        return float(FLOAT_FORMAT % value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _header_value(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def build_header(
    record_type: str,
    cal: Optional[Calibration] = None,
    params: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Header block of a report: schema, record type, calibration fields and hash, run parameters.
    """
    header: Dict[str, Any] = {"schema": REPORT_SCHEMA, "record": record_type}
    if cal is not None:
        for name, value in cal.model_dump().items():
            header[f"calibration.{name}"] = value
        header["calibration.hash"] = cal.config_hash()
    for name in sorted(params or {}):
        header[f"param.{name}"] = params[name]
    return header


class ReportWriter:
    """
    Serialises lists of record dataclasses with a deterministic column order
    (the dataclass field order).
    """

    def __init__(self):
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger

    @staticmethod
    def _columns(record_type: type) -> List[str]:
        return [f.name for f in dataclasses.fields(record_type)]

    @log_exceptions("Failed to write report")
    def write_report(
        self,
        records: Sequence[Any],
        path: Union[str, Path],
        fmt: str = "csv",
        cal: Optional[Calibration] = None,
        params: Optional[Mapping[str, Any]] = None,
        record_type: Optional[type] = None,
    ) -> Path:
        """
        Writes one report file.

        Args:
            records (Sequence[Any]): Dataclass instances of one type.
            path (str | Path): Destination file.
            fmt (str): ``csv`` or ``json``.
            cal (Calibration | None): Calibration echoed in the header.
            params (Mapping[str, Any] | None): Run parameters echoed in the header.
            record_type (type | None): Dataclass of the records; required when ``records`` is empty.

        Returns:
            Path: The written file.
        """
        if fmt not in REPORT_FORMATS:
            raise ValueError(f"Unknown report format '{fmt}'; choose from {REPORT_FORMATS}")
        if record_type is None:
            if not records:
                raise ValueError("record_type is required for an empty report")
            record_type = type(records[0])

        columns = self._columns(record_type)
        rows = [dataclasses.asdict(r) for r in records]
        header = build_header(record_type.__name__, cal, params)

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as f:
                for key, value in header.items():
                    f.write(f"# {key}: {_header_value(value)}\n")
                pd.DataFrame(rows, columns=columns).to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        else:
            document = {
                "header": {k: round_sig(v) for k, v in header.items()},
                "records": [{c: round_sig(row[c]) for c in columns} for row in rows],
            }
            path.write_text(json.dumps(document, indent=2, allow_nan=False) + "\n", encoding="utf-8")

        if not records:
            self.logger.warning(f"⚠️ No {record_type.__name__} records; wrote header-only {path}")
        else:
            self.logger.info(f"💾 Wrote {len(records)} {record_type.__name__} records to {path}")
        return path


@log_exceptions("Failed to read report")
def read_report(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """
    Reads a report written by :class:`ReportWriter`.

    Returns:
        Tuple[Dict[str, str], pd.DataFrame]: Header (CSV values as text) and the record table.

    Raises:
        SchemaError: The file does not declare the report schema.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        document = json.loads(path.read_text(encoding="utf-8"))
        header = document.get("header", {})
        table = pd.DataFrame(document.get("records", []))
    else:
        header = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition(":")
                header[key.strip()] = value.strip()
        table = pd.read_csv(path, comment="#")

    if header.get("schema") != REPORT_SCHEMA:
        raise SchemaError(f"{path}: expected schema '{REPORT_SCHEMA}', found '{header.get('schema')}'")
    return header, table
