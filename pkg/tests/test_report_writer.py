import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from postprocessing.analytics import DiffusionBin
from utils.exceptions import SchemaError
from utils.report_writer import REPORT_SCHEMA, ReportWriter, build_header, read_report, round_sig


@dataclass(frozen=True)
class Row:
    frame: int
    value: float
    label: str


ROWS = [Row(0, 1.0 / 3.0, "a"), Row(1, 2.5e16, "b"), Row(5, -0.125, "c")]


@pytest.fixture
def writer():
    return ReportWriter()


def test_round_sig():
    assert round_sig(1.0 / 3.0) == 0.333333333
    assert round_sig(math.nan) is None and round_sig(math.inf) is None
    assert round_sig(7) == 7 and round_sig("x") == "x"


def test_header_echoes_calibration_and_params(cal):
    header = build_header("Row", cal, {"z": 1, "a": [1, 2]})
    assert header["schema"] == REPORT_SCHEMA and header["record"] == "Row"
    assert header["calibration.pixels_per_nm"] == cal.pixels_per_nm
    assert header["calibration.hash"] == cal.config_hash()
    assert [k for k in header if k.startswith("param.")] == ["param.a", "param.z"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(writer, tmp_path, cal, fmt):
    path = writer.write_report(ROWS, tmp_path / f"rows.{fmt}", fmt=fmt, cal=cal, params={"seed": 3})
    header, table = read_report(path)
    assert header["record"] == "Row"
    assert str(header["param.seed"]) == "3"
    assert list(table.columns) == ["frame", "value", "label"]
    assert table["frame"].tolist() == [0, 1, 5]
    assert table["value"].tolist() == pytest.approx([1.0 / 3.0, 2.5e16, -0.125], rel=1e-8)
    assert table["label"].tolist() == ["a", "b", "c"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_identical_inputs_give_identical_bytes(writer, tmp_path, cal, fmt):
    first = writer.write_report(ROWS, tmp_path / f"one.{fmt}", fmt=fmt, cal=cal, params={"bins": [2.0, 18.0, 50]})
    second = writer.write_report(ROWS, tmp_path / f"two.{fmt}", fmt=fmt, cal=cal, params={"bins": [2.0, 18.0, 50]})
    assert first.read_bytes() == second.read_bytes()


def test_empty_report_has_header_and_columns(writer, tmp_path):
    path = writer.write_report([], tmp_path / "empty.csv", record_type=Row)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# schema: {REPORT_SCHEMA}"
    assert lines[-1] == "frame,value,label"
    header, table = read_report(path)
    assert table.empty and list(table.columns) == ["frame", "value", "label"]


def test_empty_report_needs_record_type(writer, tmp_path):
    with pytest.raises(ValueError):
        writer.write_report([], tmp_path / "empty.csv")


def test_json_writes_nan_as_null(writer, tmp_path):
    bins = [DiffusionBin(2.0, 2.32, math.nan, math.nan, 0)]
    path = writer.write_report(bins, tmp_path / "bins.json", fmt="json")
    document = json.loads(path.read_text())
    assert document["records"] == [
        {"size_lo_nm": 2.0, "size_hi_nm": 2.32, "mean_d_eff": None, "sem_d_eff": None, "count": 0}
    ]


def test_unknown_format(writer, tmp_path):
    with pytest.raises(ValueError):
        writer.write_report(ROWS, tmp_path / "rows.xml", fmt="xml")


def test_read_report_rejects_foreign_files(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_report(path)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_numpy_scalars_in_records_and_params(writer, tmp_path, fmt):
    rows = [Row(np.int64(2), np.float64(1.25), "a"), Row(3, np.float32(0.5), "b")]
    path = writer.write_report(rows, tmp_path / f"numpy.{fmt}", fmt=fmt, params={"cutoff": np.float64(0.15)})
    assert "np." not in path.read_text()
    header, table = read_report(path)
    assert float(header["param.cutoff"]) == 0.15
    assert table["frame"].tolist() == [2, 3]
    assert table["value"].tolist() == [1.25, 0.5]
