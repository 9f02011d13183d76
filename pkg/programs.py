"""programs.py

Сборка задач для ipm.ip_solve и разбор их решений в доменные типы.

build_fot_program    задача с фиксированным временем выгрузки t_u (SDR):
                     блоки W_0..W_{n_id−1}, L (=Λ); скаляры alpha_i, O_i
build_vblock_program V-блок для PDD при фиксированных α:
                     блоки W, L; скаляры O_i, t_u, at_i (=ã_i)
solve_fot            сборка + ip_solve + восстановление ранга 1 + validate
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from hermitian import ComplexMatrix
from ipm import (
    Constraint,
    CubicTerm,
    ExpPerspectiveTerm,
    IpmSettings,
    KktReport,
    MixedConvexProgram,
    ProgramPoint,
    PsdBlock,
    QuadraticTerm,
    ScalarVar,
    Term,
    ip_solve,
)
from model import (
    Allocation,
    BeamformingDesign,
    ChannelSet,
    InfeasibleAllocationError,
    ModelError,
    SolveReport,
    SystemParams,
    validate,
)

if TYPE_CHECKING:
    from pdd import PddState

logger = logging.getLogger(__name__)

FOT_MODES = ("partial", "local_only", "offload_only")
ENERGY_BLOCK = "L"
HINT_MARGIN = 2.0
INTERIOR = 1e-6


def info_block(j: int) -> str:
    return f"W{j}"


def alpha_var(i: int) -> str:
    return f"alpha_{i}"


def offload_var(i: int) -> str:
    return f"O_{i}"


def a_tilde_var(i: int) -> str:
    return f"at_{i}"


def _block_names(p: SystemParams) -> List[str]:
    return [info_block(j) for j in range(p.n_id)] + [ENERGY_BLOCK]


def power_scale(p: SystemParams, ch: ChannelSet) -> float:
    """Порядок мощности (Вт на антенну) для стартовых блоков фазы I."""
    candidates = [p.noise_power_w]
    if p.n_id:
        gain = float(np.min(np.sum(np.abs(ch.dl_id) ** 2, axis=1)))
        candidates.append(max(p.sinr_target) * p.noise_power_w / max(gain, 1e-300))
    if p.n_eh:
        gain = float(np.min(np.sum(np.abs(ch.dl_eh) ** 2, axis=1)))
        need = max(
            p.circuit_energy_j
            + p.cap_coeff[i] * p.cycles_per_bit[i] ** 3 * p.task_bits[i] ** 3 / p.block_time_s**2
            for i in range(p.n_eh)
        )
        candidates.append(need / (min(p.conversion_eff) * p.block_time_s * max(gain, 1e-300)))
    return max(candidates) / p.n_antennas


def _rate_constraints(p: SystemParams, ch: ChannelSet) -> List[Constraint]:
    """γ_j(Σ_{k≠j} Tr(G_j W_k) + Tr(G_j Λ) + Bδ²) − Tr(G_j W_j) <= 0."""
    rows = []
    for j in range(p.n_id):
        g = ch.gram_id[j]
        gamma = p.sinr_target[j]
        traces: Dict[str, NDArray[np.complex128]] = {}
        for k in range(p.n_id):
            traces[info_block(k)] = -g if k == j else gamma * g
        traces[ENERGY_BLOCK] = gamma * g
        rows.append(Constraint(f"rate_{j}", traces=traces, rhs=-gamma * p.noise_power_w))
    return rows


def _harvest_traces(p: SystemParams, ch: ChannelSet, i: int) -> Dict[str, NDArray[np.complex128]]:
    coef = -p.conversion_eff[i] * p.block_time_s * ch.gram_eh[i]
    return {name: coef for name in _block_names(p)}


def _local_term(p: SystemParams, i: int) -> CubicTerm:
    return CubicTerm(
        offload_var(i),
        p.cap_coeff[i] * p.cycles_per_bit[i] ** 3 / p.block_time_s**2,
        p.task_bits[i],
    )


def _psd_blocks(p: SystemParams, ch: ChannelSet) -> List[PsdBlock]:
    scale = power_scale(p, ch)
    return [PsdBlock(name, p.n_antennas, scale) for name in _block_names(p)]


def _objective_traces(p: SystemParams) -> Dict[str, NDArray[np.complex128]]:
    eye = np.eye(p.n_antennas, dtype=np.complex128) * p.block_time_s
    return {name: eye for name in _block_names(p)}


# ===================== ЗАДАЧА С ФИКСИРОВАННЫМ t_u =====================


def build_fot_program(
    p: SystemParams,
    ch: ChannelSet,
    t_u: float,
    mode: str = "partial",
    fixed_allocation: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    hint: bool = True,
) -> MixedConvexProgram:
    """Релаксированная задача при заданном t_u.

    mode: partial (α, O свободны), local_only (α = O = 0), offload_only (O = D).
    fixed_allocation=(alpha, O) закрепляет оба набора (остаточная задача по W, Λ).
    """
    ch.check(p)
    if mode not in FOT_MODES:
        raise ModelError(f"unknown mode {mode!r}, expected one of {FOT_MODES}")
    T = p.block_time_s
    free_offload = fixed_allocation is None and mode != "local_only"
    if not (0.0 <= t_u <= T) or (free_offload and not 0.0 < t_u < T):
        raise ModelError(f"t_u={t_u!r} must lie in (0, T={T!r}) for mode {mode}")

    scalars: List[ScalarVar] = []
    pinned_bits: List[Optional[float]] = []
    for i in range(p.n_eh):
        task = p.task_bits[i]
        if fixed_allocation is not None:
            a = float(fixed_allocation[0][i])
            o = float(fixed_allocation[1][i])
            if o > 0.0 and (a <= 0.0 or t_u <= 0.0):
                raise InfeasibleAllocationError(f"device {i}: O={o!r} with alpha={a!r}")
            scalars += [ScalarVar(alpha_var(i), a, a), ScalarVar(offload_var(i), o, o)]
            pinned_bits.append(o)
        elif mode == "local_only" or task == 0.0:
            scalars += [ScalarVar(alpha_var(i), 0.0, 0.0), ScalarVar(offload_var(i), 0.0, 0.0)]
            pinned_bits.append(0.0)
        elif mode == "offload_only":
            scalars += [ScalarVar(alpha_var(i), 0.0, 1.0), ScalarVar(offload_var(i), task, task)]
            pinned_bits.append(task)
        else:
            scalars += [ScalarVar(alpha_var(i), 0.0, 1.0), ScalarVar(offload_var(i), 0.0, task)]
            pinned_bits.append(None)

    constraints = _rate_constraints(p, ch)
    for i in range(p.n_eh):
        terms: List[Term] = []
        if p.task_bits[i] > 0.0:
            terms.append(_local_term(p, i))
        if pinned_bits[i] != 0.0:
            terms.append(
                ExpPerspectiveTerm(
                    alpha_var(i),
                    offload_var(i),
                    p.noise_power_w * t_u / float(ch.ul_gain[i]),
                    p.bandwidth_hz * t_u,
                )
            )
        constraints.append(
            Constraint(
                f"eh_{i}",
                traces=_harvest_traces(p, ch, i),
                terms=tuple(terms),
                rhs=-p.circuit_energy_j,
            )
        )
    constraints.append(
        Constraint(
            "fog",
            linear={offload_var(i): p.cycles_per_bit[i] for i in range(p.n_eh)},
            rhs=p.fog_cycles_per_s * (T - t_u),
        )
    )
    constraints.append(
        Constraint("bandwidth", linear={alpha_var(i): 1.0 for i in range(p.n_eh)}, rhs=1.0)
    )

    prog = MixedConvexProgram(
        psd_blocks=_psd_blocks(p, ch),
        scalars=scalars,
        objective_traces=_objective_traces(p),
        objective_linear={offload_var(i): p.fog_energy_per_bit_j for i in range(p.n_eh)},
        constraints=constraints,
    )
    if hint:
        prog.initial_point = fot_hint(p, ch, t_u, prog.scalars)
    return prog


def _zero_forcing(p: SystemParams, ch: ChannelSet) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """Лучи ZF (столбцы) и проектор на ортогональное дополнение ID-каналов."""
    n = p.n_antennas
    if p.n_id == 0:
        return np.zeros((n, 0), dtype=np.complex128), np.eye(n, dtype=np.complex128)
    hc = ch.dl_id.conj()
    pinv = np.linalg.pinv(hc)
    null = np.eye(n, dtype=np.complex128) - pinv @ hc
    if float(np.linalg.norm(null)) < 1e-9:
        null = np.eye(n, dtype=np.complex128)
    return pinv, 0.5 * (null + null.conj().T)


def hint_design(
    p: SystemParams, ch: ChannelSet, energy_need_j: Sequence[float]
) -> BeamformingDesign:
    """Конструктивная строго допустимая точка: ZF-лучи с запасом + Λ вдоль EH-каналов
    в нуль-пространстве ID-каналов, всё плюс ε·I."""
    n = p.n_antennas
    eps = 1e-2 * power_scale(p, ch)
    eye = np.eye(n, dtype=np.complex128)
    beams, null = _zero_forcing(p, ch)
    info = []
    for j in range(p.n_id):
        h = ch.dl_id[j]
        w = beams[:, j]
        gain = abs(np.vdot(h, w)) ** 2
        noise_like = p.n_id * eps * float(np.real(np.vdot(h, h))) + p.noise_power_w
        power = HINT_MARGIN * p.sinr_target[j] * noise_like / max(gain, 1e-300) + eps
        info.append(power * np.outer(w, w.conj()) + eps * eye)
    base = sum(info, eps * eye)
    level = 0.0
    for i in range(p.n_eh):
        h = ch.dl_eh[i]
        scale = p.conversion_eff[i] * p.block_time_s
        have = scale * float(np.real(np.vdot(h, base @ h)))
        along = scale * float(np.real(np.vdot(h, null @ h)))
        need = HINT_MARGIN * energy_need_j[i] - have
        if need > 0.0:
            level = max(level, need / max(along, 1e-300))
    return BeamformingDesign(tuple(info), level * null + eps * eye)


def _energy_need(p: SystemParams, ch: ChannelSet, alloc: Allocation) -> List[float]:
    need = []
    for i in range(p.n_eh):
        kq3 = p.cap_coeff[i] * p.cycles_per_bit[i] ** 3
        local = kq3 * max(p.task_bits[i] - alloc.offload_bits[i], 0.0) ** 3 / p.block_time_s**2
        bits = alloc.offload_bits[i]
        uplink = 0.0
        if bits > 0.0 and alloc.alpha[i] > 0.0 and alloc.t_u > 0.0:
            exponent = bits * np.log(2.0) / (alloc.alpha[i] * p.bandwidth_hz * alloc.t_u)
            uplink = (
                alloc.alpha[i] * p.noise_power_w * np.expm1(exponent) / float(ch.ul_gain[i])
            ) * alloc.t_u
        need.append(local + uplink + p.circuit_energy_j)
    return need


def _point(design: BeamformingDesign, scalars: Dict[str, float]) -> ProgramPoint:
    blocks = {info_block(j): w for j, w in enumerate(design.info_cov)}
    blocks[ENERGY_BLOCK] = design.energy_cov
    return ProgramPoint(blocks, scalars)


def fot_hint(
    p: SystemParams, ch: ChannelSet, t_u: float, scalars: Sequence[ScalarVar]
) -> ProgramPoint:
    """Подсказка для фазы I: α = 1/(n_eh+1), O = D/2 (для свободных скаляров)."""
    share = 1.0 / (p.n_eh + 1)
    values: Dict[str, float] = {}
    for s in scalars:
        if s.pinned:
            values[s.name] = s.lower
        elif s.name.startswith("alpha_"):
            values[s.name] = share * s.upper
        else:
            values[s.name] = 0.5 * (s.lower + s.upper)
    alloc = Allocation(
        tuple(values[alpha_var(i)] for i in range(p.n_eh)),
        tuple(values[offload_var(i)] for i in range(p.n_eh)),
        t_u,
    )
    return _point(hint_design(p, ch, _energy_need(p, ch, alloc)), values)


# ===================== V-БЛОК PDD =====================


def build_vblock_program(
    p: SystemParams,
    ch: ChannelSet,
    alpha_fixed: Sequence[float],
    pdd: "PddState",
    hint: Optional[Tuple[BeamformingDesign, Allocation]] = None,
) -> MixedConvexProgram:
    """Задача по (W, Λ, O, t_u, ã) при фиксированных α.

    Цель: Σ Tr(W_j)T + Tr(Λ)T + β Σ O_i + Σ_i (1/2c)(α_i t_u − ã_i + c·λ̃_i)².
    Ограничения: скорость, баланс энергии с ã_i, Σ q_i O_i + F t_u <= F T, границы.
    """
    ch.check(p)
    if len(alpha_fixed) != p.n_eh:
        raise ModelError(f"alpha has {len(alpha_fixed)} entries, expected {p.n_eh}")
    if any(a < 0.0 or a > 1.0 for a in alpha_fixed) or sum(alpha_fixed) > 1.0 + 1e-12:
        raise ModelError("alpha must satisfy 0 <= alpha_i <= 1, sum(alpha) <= 1")
    T = p.block_time_s
    c = pdd.c
    scalars = [ScalarVar("t_u", 0.0, T)]
    terms: List[Term] = []
    for i in range(p.n_eh):
        task = p.task_bits[i]
        scalars.append(ScalarVar(offload_var(i), 0.0, task))
        scalars.append(ScalarVar(a_tilde_var(i), 0.0, T))
        terms.append(
            QuadraticTerm(
                "t_u",
                a_tilde_var(i),
                1.0 / (2.0 * c),
                float(alpha_fixed[i]),
                -1.0,
                c * pdd.lambda_tilde[i],
            )
        )

    constraints = _rate_constraints(p, ch)
    for i in range(p.n_eh):
        eh_terms: List[Term] = []
        if p.task_bits[i] > 0.0:
            eh_terms.append(_local_term(p, i))
            eh_terms.append(
                ExpPerspectiveTerm(
                    a_tilde_var(i),
                    offload_var(i),
                    p.noise_power_w / float(ch.ul_gain[i]),
                    p.bandwidth_hz,
                )
            )
        constraints.append(
            Constraint(
                f"eh_{i}",
                traces=_harvest_traces(p, ch, i),
                terms=tuple(eh_terms),
                rhs=-p.circuit_energy_j,
            )
        )
    linear = {offload_var(i): p.cycles_per_bit[i] for i in range(p.n_eh)}
    linear["t_u"] = p.fog_cycles_per_s
    constraints.append(Constraint("fog", linear=linear, rhs=p.fog_cycles_per_s * T))

    prog = MixedConvexProgram(
        psd_blocks=_psd_blocks(p, ch),
        scalars=scalars,
        objective_traces=_objective_traces(p),
        objective_linear={offload_var(i): p.fog_energy_per_bit_j for i in range(p.n_eh)},
        objective_terms=terms,
        constraints=constraints,
    )
    prog.initial_point = vblock_hint(p, ch, alpha_fixed, hint)
    return prog


def _inside(value: float, lower: float, upper: float) -> float:
    pad = INTERIOR * (upper - lower)
    return min(max(value, lower + pad), upper - pad)


def vblock_hint(
    p: SystemParams,
    ch: ChannelSet,
    alpha_fixed: Sequence[float],
    previous: Optional[Tuple[BeamformingDesign, Allocation]] = None,
) -> ProgramPoint:
    T = p.block_time_s
    if previous is None:
        t_u = 0.8 * T
        alloc = Allocation(tuple(alpha_fixed), tuple(0.5 * d for d in p.task_bits), t_u)
        design = hint_design(p, ch, _energy_need(p, ch, alloc))
    else:
        design, alloc = previous
    values: Dict[str, float] = {"t_u": _inside(alloc.t_u, 0.0, T)}
    for i in range(p.n_eh):
        values[offload_var(i)] = (
            _inside(alloc.offload_bits[i], 0.0, p.task_bits[i]) if p.task_bits[i] > 0 else 0.0
        )
        values[a_tilde_var(i)] = _inside(alloc.a_tilde[i], 0.0, T)
    return _point(design, values)


# ===================== РАЗБОР РЕШЕНИЯ =====================


def rank_one_reconstruct(design: BeamformingDesign, ch: ChannelSet) -> BeamformingDesign:
    """W̃_j = W_j G_j W_j / Tr(G_j W_j), остаток W_j − W̃_j переносится в Λ.

    Сумма ΣW + Λ, полезный сигнал Tr(G_j W̃_j) и помеха каждого ID сохраняются,
    поэтому цель и все ограничения не меняются.
    """
    info = []
    energy = design.energy_cov.copy()
    for j, w in enumerate(design.info_cov):
        h = ch.dl_id[j]
        wh = w @ h
        signal = float(np.real(np.vdot(h, wh)))
        if signal <= 0.0:
            reduced = np.zeros_like(w)
        else:
            reduced = np.outer(wh, wh.conj()) / signal
        energy = energy + (w - reduced)
        info.append(reduced)
    energy = 0.5 * (energy + energy.conj().T)
    return BeamformingDesign(tuple(info), energy)


class DecodedDesign(NamedTuple):
    design: BeamformingDesign  # после rank_one_reconstruct, с лучами
    sdr_ratios: Tuple[float, ...]  # λ_2/λ_max исходных W_j релаксации
    shift: float  # max_j ‖W_j − W̃_j‖_F / ‖W_j‖_F


def decode_design(point: ProgramPoint, p: SystemParams, ch: ChannelSet) -> DecodedDesign:
    raw = BeamformingDesign(
        tuple(np.asarray(point.blocks[info_block(j)]) for j in range(p.n_id)),
        np.asarray(point.blocks[ENERGY_BLOCK]),
    )
    _, ratios = raw.with_beams()
    reduced = rank_one_reconstruct(raw, ch)
    shift = 0.0
    for w, w_r in zip(raw.info_cov, reduced.info_cov):
        norm = float(np.linalg.norm(w))
        if norm > 0.0:
            shift = max(shift, float(np.linalg.norm(w - w_r)) / norm)
    design, _ = reduced.with_beams()
    return DecodedDesign(design, ratios, shift)


def decode_fot_allocation(point: ProgramPoint, p: SystemParams, t_u: float) -> Allocation:
    return Allocation(
        tuple(point.scalars[alpha_var(i)] for i in range(p.n_eh)),
        tuple(point.scalars[offload_var(i)] for i in range(p.n_eh)),
        t_u,
    )


def decode_vblock_allocation(
    point: ProgramPoint, p: SystemParams, alpha_fixed: Sequence[float]
) -> Allocation:
    return Allocation(
        tuple(float(a) for a in alpha_fixed),
        tuple(point.scalars[offload_var(i)] for i in range(p.n_eh)),
        point.scalars["t_u"],
        tuple(point.scalars[a_tilde_var(i)] for i in range(p.n_eh)),
    )


# ===================== РЕШЕНИЕ FOT =====================


class FotSolution(NamedTuple):
    design: BeamformingDesign
    allocation: Allocation
    report: SolveReport
    kkt: KktReport


def solve_fot(
    p: SystemParams,
    ch: ChannelSet,
    t_u: float,
    mode: str = "partial",
    settings: Optional[IpmSettings] = None,
    fixed_allocation: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> FotSolution:
    """Прямой путь FOT: build_fot_program + ip_solve, ранг 1, validate."""
    settings = settings or IpmSettings()
    prog = build_fot_program(p, ch, t_u, mode, fixed_allocation)
    sol = ip_solve(prog, settings)
    decoded = decode_design(sol.point, p, ch)
    design = decoded.design
    alloc = decode_fot_allocation(sol.point, p, t_u)
    report = validate(design, alloc, ch, p, settings.feas_tol)
    report = replace(
        report,
        iterations=sol.kkt.newton_steps,
        rank_ratios=decoded.sdr_ratios,
        reconstruction_shift=decoded.shift,
    )
    if not report.converged:
        logger.warning("FOT (%s): решение нарушает ограничения, min slack %.3e", mode, report.min_slack)
    return FotSolution(design, alloc, report, sol.kkt)


__all__ = [
    "FOT_MODES",
    "build_fot_program",
    "build_vblock_program",
    "hint_design",
    "fot_hint",
    "vblock_hint",
    "rank_one_reconstruct",
    "DecodedDesign",
    "decode_design",
    "decode_fot_allocation",
    "decode_vblock_allocation",
    "FotSolution",
    "solve_fot",
    "power_scale",
]
