import math
from dataclasses import replace

import numpy as np
import pytest

import experiments
from channels import ChannelConfig
from experiments import (
    DEFAULT_GRIDS,
    CellJob,
    ExperimentError,
    ExperimentSpec,
    ResultRow,
    apply_point,
    build_jobs,
    mode_dominance_violations,
    run_cell,
    run_convergence,
    run_gamma_sweep,
    run_jobs,
    run_task_sweep,
    run_time_sweep,
    run_timing,
    summarize,
    task_crossover,
    timing_medians,
)
from hermitian import HermitianError
from ipm import IpmSettings, ProgramError
from model import SystemParams


def _row(seed, value, mode, objective, design="fot", converged=True, wall=0.1):
    return ResultRow(seed, "task_kbits", value, mode, design, objective, 10, wall, converged, 1e-9)


def _tiny_job(**overrides) -> CellJob:
    job = CellJob(
        seed=0,
        param_name="tu_frac",
        param_value=0.8,
        mode="local_only",
        design="fot",
        label="fot",
        params=SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1),
        channel=ChannelConfig(),
        settings=IpmSettings(),
    )
    return replace(job, **overrides)


def test_spec_defaults():
    spec = ExperimentSpec("gamma_sweep")
    assert spec.grid == DEFAULT_GRIDS["gamma_sweep"]
    assert spec.tu_fracs == (0.8,)
    assert spec.param_name == "gamma_db"
    assert ExperimentSpec("time_sweep").tu_fracs == (0.6, 0.8)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "nope"},
        {"kind": "gamma_sweep", "modes": ("partial", "greedy")},
        {"kind": "gamma_sweep", "designs": ("fot", "sdr")},
        {"kind": "gamma_sweep", "seeds": ()},
        {"kind": "gamma_sweep", "tu_fracs": (1.0,)},
        {"kind": "timing", "grid": (1.5,)},
    ],
)
def test_spec_rejects_bad_input(kwargs):
    with pytest.raises(ExperimentError):
        ExperimentSpec(**kwargs)


def test_single_cell_is_one_row():
    spec = ExperimentSpec("gamma_sweep", grid=(0.0,), modes=("partial",), seeds=(4,))
    jobs = build_jobs(spec)
    assert len(jobs) == 1
    assert (jobs[0].seed, jobs[0].param_value, jobs[0].mode, jobs[0].label) == (4, 0.0, "partial", "fot")


def test_job_order_and_labels():
    spec = ExperimentSpec(
        "time_sweep", grid=(1.0, 2.0), modes=("partial",), designs=("fot", "oot"), seeds=(0, 1)
    )
    jobs = build_jobs(spec)
    assert len(jobs) == 2 * 2 * 3
    assert [j.label for j in jobs[:3]] == ["fot@0.6", "fot@0.8", "oot"]
    assert [(j.seed, j.param_value) for j in jobs[:3]] == [(0, 1.0)] * 3
    assert jobs[-1].seed == 1 and jobs[-1].param_value == 2.0
    conv = build_jobs(ExperimentSpec("convergence", seeds=(0, 1)))
    assert [(j.design, j.param_value) for j in conv] == [("oot", 5.0), ("oot", 5.0)]


def test_apply_point():
    p = SystemParams.defaults()
    assert apply_point(p, "gamma_db", 10.0).sinr_target == pytest.approx((10.0, 10.0))
    assert apply_point(p, "task_kbits", 20.0).task_bits == (2e4, 2e4)
    assert apply_point(p, "block_time_s", 1.0).block_time_s == 1.0
    grown = apply_point(p, "users", 3.0)
    assert (grown.n_eh, grown.n_id) == (3, 3)
    assert apply_point(p, "tu_frac", 0.6) is p
    with pytest.raises(ExperimentError):
        apply_point(p, "antennas", 4.0)


def test_failed_cell_becomes_nan_row():
    row = run_cell(_tiny_job(tu_frac=1.0, mode="partial"))
    assert math.isnan(row.objective_j)
    assert not row.converged
    assert row.design == "fot"


@pytest.mark.parametrize(
    "error",
    [
        np.linalg.LinAlgError("singular"),
        HermitianError("not hermitian"),
        ProgramError("bad program"),
        FloatingPointError("overflow"),
    ],
)
def test_solver_failure_becomes_nan_row(monkeypatch, error):
    def broken(*args, **kwargs):
        raise error

    monkeypatch.setattr(experiments, "solve_fot", broken)
    row = run_cell(_tiny_job())
    assert math.isnan(row.objective_j) and math.isnan(row.max_rank_ratio)
    assert not row.converged
    assert row.wall_time_s >= 0.0
    rows = run_jobs([_tiny_job(seed=s) for s in (0, 1)], workers=1)
    assert [r.seed for r in rows] == [0, 1]
    assert not any(r.converged for r in rows)


def test_unknown_design_is_not_swallowed():
    with pytest.raises(ExperimentError):
        run_cell(_tiny_job(design="greedy"))


def test_cell_solves_small_instance():
    row = run_cell(_tiny_job())
    assert row.converged
    assert row.objective_j > 0.0
    assert row.max_rank_ratio <= 1e-5
    assert row.beamforming is not None and row.allocation is not None


def test_cell_without_tasks_modes_agree():
    params = SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1).with_task_bits(0.0)
    rows = [run_cell(_tiny_job(mode=m, params=params)) for m in ("local_only", "partial")]
    assert rows[0].objective_j == pytest.approx(rows[1].objective_j, rel=1e-6)


def test_run_jobs_sequential_matches_cells():
    jobs = [_tiny_job(seed=s) for s in (0, 1)]
    rows = run_jobs(jobs, workers=1)
    assert [r.seed for r in rows] == [0, 1]
    again = run_jobs(jobs, workers=1)
    assert [r.objective_j for r in rows] == [r.objective_j for r in again]


@pytest.mark.slow
def test_run_jobs_pool_keeps_order():
    jobs = [_tiny_job(seed=s) for s in (3, 1, 2)]
    pooled = run_jobs(jobs, workers=2)
    serial = run_jobs(jobs, workers=1)
    assert [r.seed for r in pooled] == [3, 1, 2]
    assert [r.objective_j for r in pooled] == [r.objective_j for r in serial]


def test_dominance_check():
    rows = [
        _row(0, 2.0, "partial", 1.0),
        _row(0, 2.0, "local_only", 1.0 + 1e-12),
        _row(0, 2.0, "offload_only", 3.0),
        _row(0, 5.0, "partial", 2.5),
        _row(0, 5.0, "local_only", 2.0),
    ]
    bad = mode_dominance_violations(rows, tol=1e-9)
    assert len(bad) == 1
    seed, value, design, excess = bad[0]
    assert (seed, value, design) == (0, 5.0, "fot")
    assert excess == pytest.approx(0.5)


def test_task_crossover():
    rows = []
    for value, local, offload in [(2, 1.0, 2.0), (5, 1.0, 1.5), (10, 2.0, 1.0), (20, 4.0, 1.0)]:
        rows += [_row(0, value, "local_only", local), _row(0, value, "offload_only", offload)]
    rows.append(_row(0, 30, "local_only", 9.0, converged=False))
    rows.append(_row(1, 2, "local_only", 1.0))
    rows.append(_row(1, 2, "offload_only", 1.0))
    result = task_crossover(rows)
    assert result[0].sign_at_min == 1
    assert result[0].sign_changes == 1
    assert result[0].value == 10
    assert result[1].sign_changes == 0 and result[1].value is None


def test_timing_medians_and_summary():
    rows = [
        _row(s, 2.0, "partial", 1.0 + s, design=d, wall=w)
        for s, d, w in [(0, "fot", 0.1), (1, "fot", 0.3), (2, "fot", 0.2), (0, "oot", 1.0)]
    ]
    rows.append(_row(3, 2.0, "partial", math.nan, converged=False, wall=0.2))
    med = timing_medians(rows)
    assert med[("fot", 2.0)] == pytest.approx(0.2)
    assert med[("oot", 2.0)] == pytest.approx(1.0)
    summary = summarize(rows)
    assert (summary["rows"], summary["converged"], summary["failed"]) == (5, 4, 1)
    assert summary["mean_objective_j"]["fot/partial"] == pytest.approx(2.0)


def test_runners_check_kind():
    spec = ExperimentSpec("gamma_sweep")
    for runner in (run_task_sweep, run_time_sweep, run_timing, run_convergence):
        with pytest.raises(ExperimentError):
            runner(spec)


def test_small_gamma_and_task_sweeps():
    small = SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1)
    rows = run_gamma_sweep(
        ExperimentSpec("gamma_sweep", grid=(0.0, 3.0), modes=("local_only",), params=small)
    )
    assert [r.param_value for r in rows] == [0.0, 3.0]
    assert all(r.converged and r.param_name == "gamma_db" for r in rows)
    assert rows[0].objective_j <= rows[1].objective_j + 1e-9
    rows = run_task_sweep(
        ExperimentSpec("task_sweep", grid=(2.0,), modes=("local_only",), params=small)
    )
    assert rows[0].params is not None and rows[0].params.task_bits == (2e3,)


@pytest.mark.slow
def test_time_sweep_timing_and_convergence_rows():
    small = SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1)
    rows = run_time_sweep(ExperimentSpec("time_sweep", grid=(2.0,), params=small))
    assert [(r.design, r.mode) for r in rows] == [
        ("fot@0.6", "partial"), ("fot@0.8", "partial"), ("oot", "partial"),
    ]
    assert rows[2].objective_j <= min(r.objective_j for r in rows[:2]) + 1e-6
    timing = run_timing(ExperimentSpec("timing", grid=(1.0,), params=small, jobs=4))
    assert [r.design for r in timing] == ["fot", "oot"]
    conv = run_convergence(ExperimentSpec("convergence", params=small))
    assert len(conv.rows) == 1
    assert [t.k for t in conv.trace] == list(range(len(conv.trace)))
    assert conv.trace[-1].violation <= 1e-6


@pytest.mark.slow
def test_penalty_design_is_slower_than_fixed_time():
    rows = run_timing(ExperimentSpec("timing", grid=(1.0, 2.0, 3.0, 4.0), seeds=(0, 1, 2)))
    med = timing_medians(rows)
    for users in (1.0, 2.0, 3.0, 4.0):
        assert med[("oot", users)] > med[("fot", users)]
