from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from channels import ChannelConfig, gen_channels
from hermitian import gram, rank_one_extract
from ipm import ip_solve
from model import (
    Allocation,
    BeamformingDesign,
    ChannelSet,
    InfeasibleAllocationError,
    ModelError,
    SystemParams,
    sinr_and_rate,
    validate,
)
from pdd import PddState
from programs import (
    FOT_MODES,
    build_fot_program,
    build_vblock_program,
    decode_design,
    fot_hint,
    info_block,
    rank_one_reconstruct,
    solve_fot,
)


def _mrt_instance(scale=0.05):
    p = SystemParams.defaults(n_antennas=4, n_eh=0, n_id=1)
    h = scale * np.array([[1.0, 1j, -1.0, 1.0]])
    ch = ChannelSet(np.zeros((0, 4)), h, np.zeros((0, 4)))
    return p, ch


def test_program_shape_at_defaults(params, channels):
    prog = build_fot_program(params, channels, 1.6)
    assert len(prog.psd_blocks) == params.n_id + 1
    assert prog.inequality_count() == 5 * params.n_eh + params.n_id + 2
    labels = [c.label for c in prog.constraints]
    assert labels == ["rate_0", "rate_1", "eh_0", "eh_1", "fog", "bandwidth"]
    assert prog.initial_point is not None


def test_mode_pinning(params, channels):
    local = build_fot_program(params, channels, 1.6, "local_only")
    assert all(s.pinned and s.lower == 0.0 for s in local.scalars)
    full = build_fot_program(params, channels, 1.6, "offload_only")
    bits = {s.name: s for s in full.scalars if s.name.startswith("O_")}
    assert all(s.pinned and s.lower == params.task_bits[0] for s in bits.values())
    no_task = build_fot_program(params.with_task_bits(0.0), channels, 1.6)
    assert all(s.pinned for s in no_task.scalars)


def test_program_argument_errors(params, channels):
    with pytest.raises(ModelError):
        build_fot_program(params, channels, 1.6, "everything")
    with pytest.raises(ModelError):
        build_fot_program(params, channels, params.block_time_s)
    with pytest.raises(InfeasibleAllocationError):
        build_fot_program(params, channels, 1.6, fixed_allocation=((0.0, 0.5), (10.0, 0.0)))
    with pytest.raises(ModelError):
        build_vblock_program(params, channels, (0.7, 0.7), PddState.initial(params.n_eh))


def test_hint_is_strictly_feasible(params, channels):
    prog = build_fot_program(params, channels, 1.6)
    hint = fot_hint(params, channels, 1.6, prog.scalars)
    design = BeamformingDesign(
        (hint.blocks["W0"], hint.blocks["W1"]), hint.blocks["L"]
    )
    alloc = Allocation(
        (hint.scalars["alpha_0"], hint.scalars["alpha_1"]),
        (hint.scalars["O_0"], hint.scalars["O_1"]),
        1.6,
    )
    report = validate(design, alloc, channels, params)
    assert min(report.rate_slack) > 0.0
    assert min(report.eh_slack) > 0.0
    assert report.psd_slack > 0.0


def test_rank_one_reconstruct_keeps_sum_and_signal(rng, params, channels):
    covs = []
    for _ in range(3):
        a = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        covs.append(1e-3 * a @ a.conj().T)
    design = BeamformingDesign(tuple(covs[:2]), covs[2])
    out = rank_one_reconstruct(design, channels)
    assert np.allclose(out.total_cov, design.total_cov, atol=1e-13)
    for j in range(2):
        g = channels.gram_id[j]
        assert np.real(np.trace(g @ out.info_cov[j])) == pytest.approx(
            np.real(np.trace(g @ design.info_cov[j]))
        )
        assert np.linalg.matrix_rank(out.info_cov[j], tol=1e-12) == 1
        assert sinr_and_rate(out, channels, params, j)[0] == pytest.approx(
            sinr_and_rate(design, channels, params, j)[0]
        )
    assert np.min(np.linalg.eigvalsh(out.energy_cov)) >= -1e-12


@pytest.mark.parametrize("scale", [0.05, 0.5, 5.0])
def test_single_user_matches_mrt_power(scale):
    p, ch = _mrt_instance(scale)
    sol = solve_fot(p, ch, 1.0)
    gain = float(np.sum(np.abs(ch.dl_id[0]) ** 2))
    expected = p.sinr_target[0] * p.noise_power_w / gain * p.block_time_s
    assert sol.report.objective_j == pytest.approx(expected, rel=1e-6)
    assert sol.report.converged
    assert sol.report.max_rank_ratio <= 1e-5
    w = sol.design.beams[0]
    h = ch.dl_id[0]
    assert abs(np.vdot(h, w)) ** 2 == pytest.approx(np.linalg.norm(h) ** 2 * np.linalg.norm(w) ** 2, rel=1e-4)


def test_zero_task_reduces_to_circuit_energy(tiny):
    ch = ChannelSet(
        np.array([[0.1, 0.05j]]), np.array([[0.02, -0.03]]), np.array([[0.1, 0.05j]])
    )
    p = tiny.with_task_bits(0.0)
    sol = solve_fot(p, ch, 1.0)
    assert sol.allocation.offload_bits == (0.0,)
    assert sol.report.eh_slack[0] >= -1e-8
    assert sol.report.converged


@pytest.mark.slow
def test_defaults_feasible_rank_one_and_mode_order(params, channels):
    t_u = 0.8 * params.block_time_s
    results = {mode: solve_fot(params, channels, t_u, mode) for mode in FOT_MODES}
    for sol in results.values():
        assert sol.report.converged
        assert sol.report.min_slack >= -1e-8
        assert sol.report.max_rank_ratio <= 1e-5
        assert sol.report.objective_j > 0.0
    partial = results["partial"].report.objective_j
    assert partial <= results["local_only"].report.objective_j + 1e-7
    assert partial <= results["offload_only"].report.objective_j + 1e-7


@pytest.mark.slow
def test_two_antenna_grid_oracle(tiny):
    """Перебор Λ = λ·vvᴴ и W = ρ·hhᴴ/‖h‖² по сетке даёт верхнюю оценку цели."""
    ch = ChannelSet(
        np.array([[0.2, 0.1j]]), np.array([[0.03, 0.04]]), np.array([[0.2, 0.1j]])
    )
    p = tiny.with_task_bits(0.0)
    sol = solve_fot(p, ch, 1.0)
    h_id = ch.dl_id[0]
    h_eh = ch.dl_eh[0]
    best = np.inf
    u = h_id / np.linalg.norm(h_id)
    null = np.array([-np.conj(u[1]), np.conj(u[0])])
    for rho in np.linspace(0.0, 0.5, 201):
        w = rho * gram(u)
        signal = np.real(np.vdot(h_id, w @ h_id))
        if signal < p.sinr_target[0] * p.noise_power_w:
            continue
        harvested = p.conversion_eff[0] * p.block_time_s * np.real(np.vdot(h_eh, w @ h_eh))
        missing = max(p.circuit_energy_j - harvested, 0.0)
        gain = p.conversion_eff[0] * p.block_time_s * abs(np.vdot(null, h_eh)) ** 2
        lam = missing / gain
        best = min(best, (rho + lam) * p.block_time_s)
    assert sol.report.objective_j <= best + 1e-7


def test_rank_ratios_come_from_relaxation(tiny):
    ch = gen_channels(tiny, ChannelConfig(seed=3))
    t_u = 0.8 * tiny.block_time_s
    relaxed = ip_solve(build_fot_program(tiny, ch, t_u))
    raw = rank_one_extract(relaxed.point.blocks[info_block(0)])[1]
    decoded = decode_design(relaxed.point, tiny, ch)
    assert decoded.sdr_ratios == (raw,)
    assert 0.0 < raw <= 1e-5
    assert decoded.shift <= 1e-5
    # после восстановления W̃_0 ранга 1 точно
    assert rank_one_extract(decoded.design.info_cov[0])[1] <= 1e-12
    sol = solve_fot(tiny, ch, t_u)
    assert sol.report.rank_ratios[0] == pytest.approx(raw, rel=1e-6, abs=1e-15)
    assert sol.report.reconstruction_shift == pytest.approx(decoded.shift, rel=1e-6, abs=1e-15)


@pytest.mark.slow
def test_relaxation_is_rank_one_over_random_instances(params):
    t_u = 0.8 * params.block_time_s
    ratios = []
    for seed in range(20):
        ch = gen_channels(params, ChannelConfig(seed=seed))
        for db in (0.0, 3.0, 6.0, 9.0, 12.0):
            sol = solve_fot(params.with_sinr_db(db), ch, t_u)
            assert sol.report.converged, (seed, db)
            ratios += sol.report.rank_ratios
    assert len(ratios) == 100 * params.n_id
    assert max(ratios) <= 1e-5


def _fixed_energy(p, ch, t_u, alpha, bits):
    sol = solve_fot(p, ch, t_u, fixed_allocation=((alpha,), (bits,)))
    return sol.report.objective_j


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_offloading_matches_grid_oracle(tiny, seed):
    """Сетка по (α, O) с уточнением по O у лучшей ячейки: цель FOT в пределах 1%."""
    p = replace(tiny, fog_energy_per_bit_j=1e-9).with_task_bits(5e4)
    ch = gen_channels(p, ChannelConfig(seed=seed))
    t_u = 0.8 * p.block_time_s
    sol = solve_fot(p, ch, t_u)
    task = p.task_bits[0]
    step = task / 10
    grid = {
        (a, o): _fixed_energy(p, ch, t_u, a, o)
        for a in (0.5, 0.999)
        for o in np.linspace(0.0, task, 11)
    }
    (a_best, o_best), best = min(grid.items(), key=lambda kv: kv[1])
    refined = minimize_scalar(
        lambda o: _fixed_energy(p, ch, t_u, a_best, o),
        bounds=(max(o_best - step, 0.0), min(o_best + step, task)),
        method="bounded",
        options={"xatol": 1e-4 * task},
    )
    oracle = min(best, float(refined.fun))
    assert sol.report.converged
    assert sol.report.objective_j <= oracle * (1.0 + 1e-6)
    assert sol.report.objective_j >= oracle * (1.0 - 1e-2)
