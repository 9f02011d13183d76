# export.py
"""Запись результатов: CSV (основной формат) и Excel (.xlsx, при наличии openpyxl).

Числа пишутся кратчайшим точным представлением (repr), логические значения:
true/false. Заголовок CSV версионирован и закреплён в data/csv/schema.txt.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from pathlib import Path
from typing import Any, List, Optional, Sequence, TextIO, Union, cast

from experiments import ConvergenceRow, ResultRow

try:
    import openpyxl  # type: ignore
except Exception:
    openpyxl = None

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RESULT_COLUMNS = (
    "seed",
    "param_name",
    "param_value",
    "mode",
    "design",
    "objective_j",
    "iterations",
    "wall_time_s",
    "converged",
    "max_rank_ratio",
)
TRACE_COLUMNS = ("seed", "k", "q_j", "violation", "penalty")

PathLike = Union[str, "os.PathLike[str]"]


def format_value(value: Any) -> str:
    """Кратчайшее представление, восстанавливающее значение без потерь."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(float(value))
    return str(value)


def result_record(row: ResultRow) -> List[Any]:
    values: List[Any] = [getattr(row, name) for name in RESULT_COLUMNS]
    return [float(v) if isinstance(v, float) else v for v in values]


def trace_record(row: ConvergenceRow) -> List[Any]:
    return [row.seed, row.k, row.q_j, row.violation, row.penalty]


def _write_rows(f: TextIO, header: Sequence[str], records: Sequence[Sequence[Any]]) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        w.writerow([format_value(v) for v in rec])


def render_results(rows: Sequence[ResultRow]) -> str:
    """CSV результатов строкой (для вывода в stdout)."""
    buf = io.StringIO()
    _write_rows(buf, RESULT_COLUMNS, [result_record(r) for r in rows])
    return buf.getvalue()


def _write_csv(path: PathLike, header: Sequence[str], records: Sequence[Sequence[Any]]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        _write_rows(f, header, records)
    logger.info("записано %d строк в %s", len(records), target)


def write_results_csv(rows: Sequence[ResultRow], path: PathLike) -> None:
    _write_csv(path, RESULT_COLUMNS, [result_record(r) for r in rows])


def write_trace_csv(rows: Sequence[ConvergenceRow], path: PathLike) -> None:
    _write_csv(path, TRACE_COLUMNS, [trace_record(r) for r in rows])


def write_results_xlsx(
    rows: Sequence[ResultRow],
    path: PathLike,
    trace: Optional[Sequence[ConvergenceRow]] = None,
) -> None:
    """Лист results и, для исследования сходимости, лист trace."""
    if openpyxl is None:
        raise RuntimeError("Для экспорта в Excel требуется пакет openpyxl.")
    wb = openpyxl.Workbook()
    ws = cast(Any, wb.active)
    ws.title = "results"
    ws.append(list(RESULT_COLUMNS))
    for r in rows:
        ws.append(result_record(r))
    if trace is not None:
        ws_trace = wb.create_sheet("trace")
        ws_trace.append(list(TRACE_COLUMNS))
        for t in trace:
            ws_trace.append(trace_record(t))
    ws_meta = wb.create_sheet("meta")
    ws_meta.append(["schema_version", SCHEMA_VERSION])
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    wb.save(target)
    logger.info("записано %d строк в %s", len(rows), target)


def write_output(
    rows: Sequence[ResultRow],
    path: PathLike,
    trace: Optional[Sequence[ConvergenceRow]] = None,
) -> None:
    """Формат по расширению: .xlsx даёт Excel, иначе CSV (трасса, если задана, в CSV
    заменяет таблицу результатов)."""
    if str(path).lower().endswith(".xlsx"):
        write_results_xlsx(rows, path, trace)
    elif trace is not None:
        write_trace_csv(trace, path)
    else:
        write_results_csv(rows, path)


def schema_text() -> str:
    """Содержимое data/csv/schema.txt."""
    return (
        f"# results.csv schema v{SCHEMA_VERSION}\n"
        + ",".join(RESULT_COLUMNS)
        + "\n"
        + f"# convergence.csv schema v{SCHEMA_VERSION}\n"
        + ",".join(TRACE_COLUMNS)
        + "\n"
    )


__all__ = [
    "SCHEMA_VERSION",
    "RESULT_COLUMNS",
    "TRACE_COLUMNS",
    "format_value",
    "result_record",
    "render_results",
    "trace_record",
    "write_results_csv",
    "write_trace_csv",
    "write_results_xlsx",
    "write_output",
    "schema_text",
]
