"""experiments.py

Исследования численного раздела в виде seeded-прогонов:

    gamma_sweep  энергия vs γ (дБ), три режима FOT
    task_sweep   энергия vs D (Кбит), три режима FOT
    convergence  трасса PDD (k, q, ε̃) при γ = 5 дБ
    time_sweep   энергия vs T: FOT при t_u = 0.6T, 0.8T и OOT
    timing       время решения vs число пользователей (N_eh = N_id)

Каждая ячейка (seed, точка сетки, режим, дизайн) решается отдельным вызовом run_cell.
Ячейки выполняются пулом процессов; порядок строк всегда порядок постановки.
Ошибка решателя не прерывает прогон: строка пишется с objective = nan.
"""

from __future__ import annotations

import logging
import math
import statistics
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from numpy.linalg import LinAlgError

from channels import ChannelConfig, ChannelError, gen_channels
from fot_dual import dual_ascent_solve
from hermitian import HermitianError
from ipm import InfeasibleProgramError, IpmSettings, NumericalError, ProgramError
from model import Allocation, BeamformingDesign, ModelError, SystemParams
from pdd import PddTraceRow, solve_oot
from programs import FOT_MODES, solve_fot

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("gamma_sweep", "task_sweep", "convergence", "time_sweep", "timing")
DESIGNS = ("fot", "oot")
CELL_DESIGNS = ("fot", "fot_dual", "oot")

DEFAULT_GRIDS: Dict[str, Tuple[float, ...]] = {
    "gamma_sweep": (0.0, 3.0, 6.0, 9.0, 12.0),  # дБ
    "task_sweep": (2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0),  # Кбит
    "convergence": (5.0,),  # дБ
    "time_sweep": (1.0, 1.5, 2.0, 2.5),  # с
    "timing": (1.0, 2.0, 3.0, 4.0),  # пользователей каждого типа
}
PARAM_NAMES = {
    "gamma_sweep": "gamma_db",
    "task_sweep": "task_kbits",
    "convergence": "gamma_db",
    "time_sweep": "block_time_s",
    "timing": "users",
    "single": "tu_frac",
}
DEFAULT_TU_FRAC = 0.8
TIME_SWEEP_TU_FRACS = (0.6, 0.8)
OOT_MODE = "partial"
SOLVER_ERRORS = (
    InfeasibleProgramError,
    NumericalError,
    ProgramError,
    ModelError,
    ChannelError,
    HermitianError,
    LinAlgError,
    FloatingPointError,
)


class ExperimentError(ValueError):
    """Неверное описание эксперимента."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    grid: Tuple[float, ...] = ()
    modes: Tuple[str, ...] = FOT_MODES
    designs: Tuple[str, ...] = ("fot",)
    tu_fracs: Tuple[float, ...] = ()
    seeds: Tuple[int, ...] = (0,)
    params: SystemParams = field(default_factory=SystemParams.defaults)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    settings: IpmSettings = field(default_factory=IpmSettings)
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ExperimentError(f"unknown experiment {self.kind!r}")
        grid = tuple(float(v) for v in (self.grid or DEFAULT_GRIDS[self.kind]))
        object.__setattr__(self, "grid", grid)
        if not self.tu_fracs:
            fracs = TIME_SWEEP_TU_FRACS if self.kind == "time_sweep" else (DEFAULT_TU_FRAC,)
            object.__setattr__(self, "tu_fracs", fracs)
        if not self.modes or any(m not in FOT_MODES for m in self.modes):
            raise ExperimentError(f"modes must be a non-empty subset of {FOT_MODES}")
        if not self.designs or any(d not in DESIGNS for d in self.designs):
            raise ExperimentError(f"designs must be a non-empty subset of {DESIGNS}")
        if not self.seeds:
            raise ExperimentError("at least one seed is required")
        if any(not 0.0 < f < 1.0 for f in self.tu_fracs):
            raise ExperimentError("t_u fractions must lie in (0, 1)")
        if self.kind == "timing" and any(v < 1 or v != int(v) for v in grid):
            raise ExperimentError("timing grid must hold positive integers")

    @property
    def param_name(self) -> str:
        return PARAM_NAMES[self.kind]


@dataclass(frozen=True)
class CellJob:
    seed: int
    param_name: str
    param_value: float
    mode: str
    design: str  # fot | fot_dual | oot
    label: str  # значение колонки design
    params: SystemParams
    channel: ChannelConfig
    settings: IpmSettings
    tu_frac: float = DEFAULT_TU_FRAC


@dataclass(frozen=True)
class ResultRow:
    seed: int
    param_name: str
    param_value: float
    mode: str
    design: str
    objective_j: float
    iterations: int
    wall_time_s: float
    converged: bool
    max_rank_ratio: float
    beamforming: Optional[BeamformingDesign] = field(default=None, compare=False, repr=False)
    allocation: Optional[Allocation] = field(default=None, compare=False, repr=False)
    params: Optional[SystemParams] = field(default=None, compare=False, repr=False)
    trace: Tuple[PddTraceRow, ...] = field(default=(), compare=False, repr=False)


class ConvergenceRow(NamedTuple):
    seed: int
    k: int
    q_j: float
    violation: float
    penalty: float


class ConvergenceResult(NamedTuple):
    rows: List[ResultRow]
    trace: List[ConvergenceRow]


def apply_point(p: SystemParams, param_name: str, value: float) -> SystemParams:
    """Параметры системы в точке сетки."""
    if param_name == "gamma_db":
        return p.with_sinr_db(value)
    if param_name == "task_kbits":
        return p.with_task_bits(value * 1e3)
    if param_name == "block_time_s":
        return p.with_block_time(value)
    if param_name == "users":
        return p.with_users(int(value), int(value))
    if param_name == "tu_frac":
        return p  # t_u задаётся CellJob.tu_frac
    raise ExperimentError(f"unknown swept parameter {param_name!r}")


def run_cell(job: CellJob) -> ResultRow:
    """Одна ячейка; исключения решателя превращаются в строку converged=false."""
    p = apply_point(job.params, job.param_name, job.param_value)
    start = time.perf_counter()
    failed = ResultRow(
        job.seed, job.param_name, job.param_value, job.mode, job.label,
        math.nan, 0, 0.0, False, math.nan, params=p,
    )
    try:
        ch = gen_channels(p, replace(job.channel, seed=job.seed))
        t_u = job.tu_frac * p.block_time_s
        trace: Tuple[PddTraceRow, ...] = ()
        if job.design == "oot":
            oot = solve_oot(p, ch, job.settings)
            design, alloc, report = oot.design, oot.allocation, oot.report
            trace = tuple(oot.trace)
        elif job.design == "fot_dual":
            dual = dual_ascent_solve(p, ch, t_u, job.settings)
            design, alloc, report = dual.design, dual.allocation, dual.report
        elif job.design == "fot":
            fot = solve_fot(p, ch, t_u, job.mode, job.settings)
            design, alloc, report = fot.design, fot.allocation, fot.report
        else:
            raise ExperimentError(f"unknown design {job.design!r}")
    except SOLVER_ERRORS:
        logger.exception(
            "ячейка seed=%d %s=%g %s/%s не решена",
            job.seed, job.param_name, job.param_value, job.label, job.mode,
        )
        return replace(failed, wall_time_s=time.perf_counter() - start)
    elapsed = time.perf_counter() - start
    return ResultRow(
        seed=job.seed,
        param_name=job.param_name,
        param_value=job.param_value,
        mode=job.mode,
        design=job.label,
        objective_j=report.objective_j,
        iterations=report.iterations,
        wall_time_s=elapsed,
        converged=report.converged,
        max_rank_ratio=report.max_rank_ratio,
        beamforming=design,
        allocation=alloc,
        params=p,
        trace=trace,
    )


def run_jobs(jobs: Sequence[CellJob], workers: int = 1) -> List[ResultRow]:
    """Строки в порядке jobs независимо от порядка завершения."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, jobs))


def _fot_label(spec: ExperimentSpec, frac: float) -> str:
    return "fot" if len(spec.tu_fracs) == 1 else f"fot@{frac:g}"


def build_jobs(spec: ExperimentSpec) -> List[CellJob]:
    """Ячейки в порядке seed → точка сетки → дизайн → режим."""
    jobs: List[CellJob] = []

    def job(seed: int, value: float, mode: str, design: str, label: str, frac: float) -> CellJob:
        return CellJob(
            seed, spec.param_name, value, mode, design, label,
            spec.params, spec.channel, spec.settings, frac,
        )

    for seed in spec.seeds:
        for value in spec.grid:
            if spec.kind == "convergence":
                jobs.append(job(seed, value, OOT_MODE, "oot", "oot", DEFAULT_TU_FRAC))
                continue
            if "fot" in spec.designs:
                for frac in spec.tu_fracs:
                    for mode in spec.modes:
                        jobs.append(job(seed, value, mode, "fot", _fot_label(spec, frac), frac))
            if "oot" in spec.designs:
                jobs.append(job(seed, value, OOT_MODE, "oot", "oot", spec.tu_fracs[0]))
    return jobs


def run_experiment(spec: ExperimentSpec) -> List[ResultRow]:
    jobs = build_jobs(spec)
    logger.info("%s: %d ячеек, workers=%d", spec.kind, len(jobs), spec.jobs)
    return run_jobs(jobs, spec.jobs)


def run_gamma_sweep(spec: ExperimentSpec) -> List[ResultRow]:
    return run_experiment(_expect(spec, "gamma_sweep"))


def run_task_sweep(spec: ExperimentSpec) -> List[ResultRow]:
    return run_experiment(_expect(spec, "task_sweep"))


def run_convergence(spec: ExperimentSpec) -> ConvergenceResult:
    """Трасса PDD по каждому seed: строки (seed, k, q, ε̃, c)."""
    rows = run_experiment(_expect(spec, "convergence"))
    trace = [
        ConvergenceRow(r.seed, t.k, t.q, t.violation, t.penalty) for r in rows for t in r.trace
    ]
    return ConvergenceResult(rows, trace)


def run_time_sweep(spec: ExperimentSpec) -> List[ResultRow]:
    spec = _expect(spec, "time_sweep")
    if spec.modes != (OOT_MODE,):
        spec = replace(spec, modes=(OOT_MODE,))
    if set(spec.designs) != set(DESIGNS):
        spec = replace(spec, designs=DESIGNS)
    return run_experiment(spec)


def run_timing(spec: ExperimentSpec) -> List[ResultRow]:
    """Замеры времени идут последовательно, чтобы процессы не делили ядра."""
    spec = _expect(spec, "timing")
    spec = replace(spec, modes=(OOT_MODE,), designs=DESIGNS, jobs=1)
    return run_experiment(spec)


def _expect(spec: ExperimentSpec, kind: str) -> ExperimentSpec:
    if spec.kind != kind:
        raise ExperimentError(f"expected a {kind} spec, got {spec.kind}")
    return spec


RUNNERS = {
    "gamma_sweep": run_gamma_sweep,
    "task_sweep": run_task_sweep,
    "time_sweep": run_time_sweep,
    "timing": run_timing,
}


# ===================== АНАЛИЗ =====================


class Crossover(NamedTuple):
    sign_at_min: int  # знак (offload_only − local_only) при наименьшем D
    sign_changes: int
    value: Optional[float]  # первая точка, где знак сменился


def _sign(x: float) -> int:
    return (x > 0.0) - (x < 0.0)


def _by_mode(rows: Sequence[ResultRow]) -> Dict[Tuple[int, float, str], Dict[str, float]]:
    table: Dict[Tuple[int, float, str], Dict[str, float]] = defaultdict(dict)
    for r in rows:
        if r.converged and not math.isnan(r.objective_j):
            table[(r.seed, r.param_value, r.design)][r.mode] = r.objective_j
    return table


def task_crossover(rows: Sequence[ResultRow], design: str = "fot") -> Dict[int, Crossover]:
    """По каждому seed: где offload_only начинает/перестаёт выигрывать у local_only."""
    diffs: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
    for (seed, value, label), modes in sorted(_by_mode(rows).items()):
        if label == design and "offload_only" in modes and "local_only" in modes:
            diffs[seed].append((value, modes["offload_only"] - modes["local_only"]))
    out: Dict[int, Crossover] = {}
    for seed, series in diffs.items():
        signs = [(v, _sign(d)) for v, d in series if _sign(d) != 0]
        if not signs:
            out[seed] = Crossover(0, 0, None)
            continue
        changes = 0
        first: Optional[float] = None
        for (_, s0), (v1, s1) in zip(signs, signs[1:]):
            if s1 != s0:
                changes += 1
                if first is None:
                    first = v1
        out[seed] = Crossover(signs[0][1], changes, first)
    return out


def mode_dominance_violations(
    rows: Sequence[ResultRow], tol: float = 1e-9
) -> List[Tuple[int, float, str, float]]:
    """(seed, точка, дизайн, превышение), где partial > min(бенчмарков) + tol."""
    bad: List[Tuple[int, float, str, float]] = []
    for (seed, value, label), modes in sorted(_by_mode(rows).items()):
        if "partial" not in modes:
            continue
        bench = [modes[m] for m in ("local_only", "offload_only") if m in modes]
        if bench and modes["partial"] > min(bench) + tol:
            bad.append((seed, value, label, modes["partial"] - min(bench)))
    return bad


def timing_medians(rows: Sequence[ResultRow]) -> Dict[Tuple[str, float], float]:
    """Медиана wall_time_s по seed для каждой пары (дизайн, точка сетки)."""
    times: Dict[Tuple[str, float], List[float]] = defaultdict(list)
    for r in rows:
        times[(r.design, r.param_value)].append(r.wall_time_s)
    return {key: statistics.median(v) for key, v in sorted(times.items())}


def summarize(rows: Sequence[ResultRow]) -> Dict[str, Any]:
    converged = [r for r in rows if r.converged]
    per_design: Dict[str, List[float]] = defaultdict(list)
    for r in converged:
        per_design[f"{r.design}/{r.mode}"].append(r.objective_j)
    return {
        "rows": len(rows),
        "converged": len(converged),
        "failed": len(rows) - len(converged),
        "max_rank_ratio": max((r.max_rank_ratio for r in converged), default=0.0),
        "mean_objective_j": {k: statistics.fmean(v) for k, v in sorted(per_design.items())},
    }


__all__ = [
    "EXPERIMENT_KINDS",
    "DESIGNS",
    "DEFAULT_GRIDS",
    "ExperimentError",
    "ExperimentSpec",
    "CellJob",
    "ResultRow",
    "ConvergenceRow",
    "ConvergenceResult",
    "apply_point",
    "run_cell",
    "run_jobs",
    "build_jobs",
    "run_experiment",
    "run_gamma_sweep",
    "run_task_sweep",
    "run_convergence",
    "run_time_sweep",
    "run_timing",
    "RUNNERS",
    "Crossover",
    "task_crossover",
    "mode_dominance_violations",
    "timing_medians",
    "summarize",
]
