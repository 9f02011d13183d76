import csv
import math
from pathlib import Path

import pytest

from experiments import ConvergenceRow, ExperimentSpec, ResultRow, run_gamma_sweep
from export import (
    RESULT_COLUMNS,
    TRACE_COLUMNS,
    format_value,
    render_results,
    schema_text,
    write_output,
)
from model import SystemParams, total_energy

ROOT = Path(__file__).resolve().parents[1]


def _rows():
    return [
        ResultRow(0, "gamma_db", 3.0, "partial", "fot", 0.1 + 0.2, 42, 1.25, True, 3e-12),
        ResultRow(1, "gamma_db", 3.0, "partial", "fot", math.nan, 0, 0.5, False, math.nan),
    ]


def test_schema_file_matches_columns():
    text = (ROOT / "data" / "csv" / "schema.txt").read_text(encoding="utf-8")
    assert text == schema_text()


@pytest.mark.parametrize(
    "value, expected",
    [
        (True, "true"),
        (False, "false"),
        (math.nan, "nan"),
        (math.inf, "inf"),
        (-math.inf, "-inf"),
        (7, "7"),
        ("local_only", "local_only"),
    ],
)
def test_format_value(value, expected):
    assert format_value(value) == expected


def test_float_text_is_exact():
    for x in (0.1 + 0.2, 1e-300, 6.540123456789012e6, -2.5e-4):
        assert float(format_value(x)) == x


def test_render_results():
    lines = render_results(_rows()).splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    first = lines[1].split(",")
    assert first[:5] == ["0", "gamma_db", "3.0", "partial", "fot"]
    assert float(first[5]) == 0.1 + 0.2
    assert first[8] == "true"
    second = lines[2].split(",")
    assert (second[5], second[8], second[9]) == ("nan", "false", "nan")


def test_write_output_csv_and_trace(tmp_path):
    out = tmp_path / "sub" / "results.csv"
    write_output(_rows(), out)
    with open(out, newline="", encoding="utf-8") as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == RESULT_COLUMNS
    assert len(table) == 3

    trace = [ConvergenceRow(0, 0, 1.5, 0.25, 0.1), ConvergenceRow(0, 1, 1.4, 1e-7, 0.01)]
    trace_out = tmp_path / "trace.csv"
    write_output(_rows(), trace_out, trace)
    lines = trace_out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[2] == "0,1,1.4,1e-07,0.01"


def test_write_output_xlsx(tmp_path):
    openpyxl = pytest.importorskip("openpyxl")
    out = tmp_path / "results.xlsx"
    trace = [ConvergenceRow(0, 0, 1.5, 0.25, 0.1)]
    write_output(_rows()[:1], out, trace)
    wb = openpyxl.load_workbook(out)
    assert wb.sheetnames == ["results", "trace", "meta"]
    ws = wb["results"]
    assert [c.value for c in ws[1]] == list(RESULT_COLUMNS)
    assert ws.cell(row=2, column=6).value == pytest.approx(0.1 + 0.2)
    assert ws.max_row == 2
    assert [c.value for c in wb["meta"][1]] == ["schema_version", 1]


def _masked(text):
    wall = RESULT_COLUMNS.index("wall_time_s")
    lines = []
    for line in text.splitlines():
        cells = line.split(",")
        cells[wall] = "-"
        lines.append(",".join(cells))
    return lines


def test_same_seed_runs_give_identical_csv():
    small = SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1)
    spec = ExperimentSpec(
        "gamma_sweep", grid=(0.0, 6.0), modes=("local_only", "partial"), seeds=(0, 1), params=small
    )
    first = run_gamma_sweep(spec)
    second = run_gamma_sweep(spec)
    assert _masked(render_results(first)) == _masked(render_results(second))
    for row, line in zip(first, render_results(first).splitlines()[1:]):
        assert row.converged
        assert float(line.split(",")[5]) == row.objective_j
        energy = total_energy(row.beamforming, row.allocation, row.params)
        assert energy == pytest.approx(row.objective_j, rel=1e-9)
