"""fot_dual.py

Полузамкнутое решение FOT через двойственную декомпозицию.

Для заданных двойственных (ν₁: ёмкость фога, ν₂: сумма полос, μ_i: баланс
энергии) задача по (α_i, O_i) распадается по устройствам:

    L_i(α, O) = βO + ν₁ q O + ν₂ α
                + μ_i [κ q³ (D − O)³ / T² + α t_u B δ² (2^{O/(α B t_u)} − 1) / ‖h‖²]

Стационарность по α даёт отношение φ = O/α через функцию Ламберта,
стационарность по O даёт замкнутую формулу для O:

    φ  = (B t_u / ln 2) · (W0(ν₂‖h‖² / (μ δ² B t_u e) − 1/e) + 1)
    O° = [D − sqrt((β + ν₁q + 2^{φ/(B t_u)} ln2 δ² μ / ‖h‖²) · T² / (3 μ κ q³))]⁺
    α° = O°/φ

Если O°/φ > 1, граница α = 1 активна и O ищется бисекцией по условию
стационарности по O при α = 1.

dual_ascent_solve итерирует (ν₁, ν₂, μ) проекционным субградиентом; W, Λ
восстанавливаются остаточной задачей (α, O закреплены) через ipm.ip_solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import lambertw

from ipm import InfeasibleProgramError, IpmSettings, NumericalError
from model import (
    Allocation,
    BeamformingDesign,
    ChannelSet,
    ModelError,
    SolveReport,
    SystemParams,
    eh_balance,
    validate,
)
from programs import FotSolution, solve_fot

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
INV_E = math.exp(-1.0)
BRANCH_TOL = 1e-12
HALLEY_MAX = 8
BISECT_ITERS = 200
DEFAULT_MAX_ITER = 40
STEP_FRACTION = 0.1
MU_DAMPING = 0.5
OBJECTIVE_RTOL = 1e-4  # |f_k − f_{k−1}| <= OBJECTIVE_RTOL·|f_k| два шага подряд


class LambertDomainError(ModelError):
    """Аргумент W0 меньше −1/e."""


def lambert_w0(x: float) -> float:
    """Главная ветвь W0: w·e^w = x, w >= −1.

    Начальное значение scipy.special.lambertw, затем уточнение Галлея.
    """
    x = float(x)
    if x < -INV_E - BRANCH_TOL:
        raise LambertDomainError(f"lambert_w0 undefined for x={x!r} < -1/e")
    if x <= -INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    w = float(np.real(lambertw(x, 0)))
    if w + 1.0 < 1e-4:
        # у точки ветвления производная w·e^w вырождается
        return max(w, -1.0)
    for _ in range(HALLEY_MAX):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def phi_ratio(nu2: float, mu_i: float, ul_gain: float, p: SystemParams, t_u: float) -> float:
    """φ_i = O_i/α_i (бит на единицу доли полосы)."""
    if mu_i <= 0.0:
        raise ModelError("phi_ratio requires mu_i > 0; use the mu_i = 0 branch")
    if nu2 <= 0.0:
        return 0.0
    bt = p.bandwidth_hz * t_u
    a = nu2 * ul_gain / (mu_i * p.noise_psd_w_per_hz * bt)
    w = lambert_w0(a * INV_E - INV_E)
    return max(bt / LN2 * (w + 1.0), 0.0)


@dataclass(frozen=True)
class FotDuals:
    nu1: float = 0.0
    nu2: float = 0.0
    mu: Tuple[float, ...] = ()
    lam: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.nu1 < 0.0 or self.nu2 < 0.0 or any(m < 0.0 for m in self.mu) or any(
            l < 0.0 for l in self.lam
        ):
            raise ModelError("dual variables must be non-negative")


def _o_stationarity(
    bits: float, alpha: float, duals: FotDuals, p: SystemParams, i: int, ul_gain: float, t_u: float
) -> float:
    """∂L_i/∂O при данной α (возрастает по O)."""
    mu = duals.mu[i]
    kq3 = p.cap_coeff[i] * p.cycles_per_bit[i] ** 3
    exponent = bits / (alpha * p.bandwidth_hz * t_u)
    uplink = mu * p.noise_psd_w_per_hz * LN2 * 2.0**exponent / ul_gain
    local = 3.0 * mu * kq3 * (p.task_bits[i] - bits) ** 2 / p.block_time_s**2
    return p.fog_energy_per_bit_j + duals.nu1 * p.cycles_per_bit[i] + uplink - local


def offload_closed_form(
    duals: FotDuals,
    p: SystemParams,
    i: int,
    phi_i: float,
    ul_gain: float,
    t_u: float,
) -> Tuple[float, float]:
    """(O_i°, α_i°) минимизирует L_i при заданных двойственных."""
    mu = duals.mu[i]
    task = p.task_bits[i]
    if mu <= 0.0 or phi_i <= 0.0 or task <= 0.0:
        return 0.0, 0.0
    kq3 = p.cap_coeff[i] * p.cycles_per_bit[i] ** 3
    marginal = (
        p.fog_energy_per_bit_j
        + duals.nu1 * p.cycles_per_bit[i]
        + 2.0 ** (phi_i / (p.bandwidth_hz * t_u)) * LN2 * p.noise_psd_w_per_hz * mu / ul_gain
    )
    bits = max(task - math.sqrt(marginal * p.block_time_s**2 / (3.0 * mu * kq3)), 0.0)
    if bits == 0.0:
        return 0.0, 0.0
    alpha = bits / phi_i
    if alpha <= 1.0:
        return bits, alpha
    # граница α = 1: корень возрастающей ∂L/∂O на [0, D]
    if _o_stationarity(0.0, 1.0, duals, p, i, ul_gain, t_u) >= 0.0:
        return 0.0, 0.0
    lo, hi = 0.0, task
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _o_stationarity(mid, 1.0, duals, p, i, ul_gain, t_u) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * task:
            break
    return 0.5 * (lo + hi), 1.0


def device_lagrangian(
    alpha: float,
    bits: float,
    duals: FotDuals,
    p: SystemParams,
    i: int,
    ul_gain: float,
    t_u: float,
) -> float:
    """Слагаемое лагранжиана устройства i по (α, O)."""
    mu = duals.mu[i]
    kq3 = p.cap_coeff[i] * p.cycles_per_bit[i] ** 3
    local = kq3 * (p.task_bits[i] - bits) ** 3 / p.block_time_s**2
    if bits <= 0.0:
        uplink = 0.0
    elif alpha <= 0.0:
        return math.inf
    else:
        exponent = bits * LN2 / (alpha * p.bandwidth_hz * t_u)
        if exponent > 700.0:
            return math.inf
        uplink = alpha * t_u * p.noise_power_w * math.expm1(exponent) / ul_gain
    return (
        p.fog_energy_per_bit_j * bits
        + duals.nu1 * p.cycles_per_bit[i] * bits
        + duals.nu2 * alpha
        + mu * (local + uplink)
    )


def closed_form_allocation(
    duals: FotDuals, p: SystemParams, ch: ChannelSet, t_u: float
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """(α°, O°) по всем устройствам."""
    alphas = []
    bits = []
    for i in range(p.n_eh):
        gain = float(ch.ul_gain[i])
        mu = duals.mu[i]
        phi = phi_ratio(duals.nu2, mu, gain, p, t_u) if mu > 0.0 else 0.0
        o, a = offload_closed_form(duals, p, i, phi, gain, t_u)
        alphas.append(a)
        bits.append(o)
    return tuple(alphas), tuple(bits)


def _balance_nu2(duals: FotDuals, p: SystemParams, ch: ChannelSet, t_u: float) -> float:
    """ν₂ на границе Σα° = 1 (Σα° убывает по ν₂); 0, если никто не выгружает."""
    active = [i for i in range(p.n_eh) if duals.mu[i] > 0.0]
    if not active:
        return 0.0
    bt = p.bandwidth_hz * t_u
    scale = min(
        duals.mu[i] * p.noise_psd_w_per_hz * bt / float(ch.ul_gain[i]) for i in active
    )

    def total(nu2: float) -> float:
        return sum(closed_form_allocation(replace(duals, nu2=nu2), p, ch, t_u)[0])

    lo = 1e-8 * scale
    if total(lo) < 1.0:
        return 0.0 if total(lo) == 0.0 else lo
    hi = scale
    for _ in range(200):
        if total(hi) < 1.0:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(BISECT_ITERS):
        mid = math.sqrt(lo * hi)
        if total(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 <= 1e-12:
            break
    return lo


def recover_allocation(
    alpha: Sequence[float], bits: Sequence[float], p: SystemParams, t_u: float
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """Проекция (α°, O°) на Σα <= 1 и Σ q O <= F(T − t_u)."""
    a = np.asarray(alpha, dtype=float)
    o = np.asarray(bits, dtype=float)
    total = float(np.sum(a))
    if total > 1.0:
        a = a / total
    cap = p.fog_cycles_per_s * (p.block_time_s - t_u)
    cycles = float(np.dot(np.asarray(p.cycles_per_bit), o))
    if cycles > cap:
        o = o * (cap / cycles) * (1.0 - 1e-9)
    o = np.where(a > 0.0, o, 0.0)
    return tuple(float(v) for v in a), tuple(float(v) for v in o)


class DualSolution(NamedTuple):
    design: BeamformingDesign
    allocation: Allocation
    report: SolveReport
    duals: FotDuals


def _residual(
    p: SystemParams,
    ch: ChannelSet,
    t_u: float,
    alloc: Tuple[Tuple[float, ...], Tuple[float, ...]],
    settings: IpmSettings,
    cache: Dict[Tuple[Tuple[float, ...], Tuple[float, ...]], Optional[FotSolution]],
) -> Optional[FotSolution]:
    key = (
        tuple(round(a, 12) for a in alloc[0]),
        tuple(round(o, 6) for o in alloc[1]),
    )
    if key not in cache:
        try:
            cache[key] = solve_fot(p, ch, t_u, "partial", settings, fixed_allocation=alloc)
        except (InfeasibleProgramError, NumericalError) as e:
            logger.info("dual ascent: остаточная задача не решена: %s", e)
            cache[key] = None
    return cache[key]


def _eh_multipliers(sol: FotSolution, n_eh: int) -> Tuple[float, ...]:
    return tuple(sol.kkt.multipliers.get(f"eh_{i}", 0.0) for i in range(n_eh))


def _rate_multipliers(sol: FotSolution, n_id: int) -> Tuple[float, ...]:
    return tuple(sol.kkt.multipliers.get(f"rate_{j}", 0.0) for j in range(n_id))


def _objective_settled(sol: Optional[FotSolution], last: Optional[float]) -> bool:
    """Допустимая точка, и цель изменилась не более чем на OBJECTIVE_RTOL·|f|."""
    if sol is None or last is None or not sol.report.converged:
        return False
    f = sol.report.objective_j
    return abs(f - last) <= OBJECTIVE_RTOL * abs(f)


def dual_ascent_solve(
    p: SystemParams,
    ch: ChannelSet,
    t_u: float,
    settings: Optional[IpmSettings] = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DualSolution:
    """Проекционный субградиент по (ν₁, ν₂, μ) с восстановлением прямой точки.

    Шаг k: замкнутые формулы (α°, O°) → проекция на допустимое множество →
    остаточная задача по (W, Λ) → субградиенты
        g_ν₁ = Σ q O° − F(T − t_u),  g_ν₂ = Σ α° − 1,
        g_μ_i = нарушение баланса энергии в (α°, O°) при восстановленных W, Λ.

    Шаг по μ не чисто субградиентный: к μ подмешиваются (с весом MU_DAMPING)
    множители ограничений eh_i из остаточной задачи ipm, так что путь
    использует и двойственную информацию барьерного метода.

    Остановка: (α, O) не меняется два шага подряд либо цель допустимой
    остаточной задачи меняется не более чем на OBJECTIVE_RTOL два шага подряд.
    Возвращает лучшую найденную допустимую точку.
    """
    settings = settings or IpmSettings()
    ch.check(p)
    if not 0.0 < t_u < p.block_time_s:
        raise ModelError(f"t_u={t_u!r} must lie in (0, T)")
    cache: Dict[Tuple[Tuple[float, ...], Tuple[float, ...]], Optional[FotSolution]] = {}
    zero = ((0.0,) * p.n_eh, (0.0,) * p.n_eh)
    warm = _residual(p, ch, t_u, zero, settings, cache)
    if warm is None:
        raise InfeasibleProgramError("instance infeasible even without offloading")
    mu = _eh_multipliers(warm, p.n_eh)
    duals = FotDuals(0.0, 0.0, mu, _rate_multipliers(warm, p.n_id))
    duals = replace(duals, nu2=_balance_nu2(duals, p, ch, t_u))
    cap = p.fog_cycles_per_s * (p.block_time_s - t_u)
    nu2_step = STEP_FRACTION * max(duals.nu2, 1e-300)
    nu1_step = STEP_FRACTION * p.fog_energy_per_bit_j / max(p.cycles_per_bit or (1.0,))
    mu_step: Optional[np.ndarray] = None

    best: Optional[FotSolution] = warm
    previous: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    last_objective: Optional[float] = None
    stable = 0
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        alpha_c, bits_c = closed_form_allocation(duals, p, ch, t_u)
        alloc = recover_allocation(alpha_c, bits_c, p, t_u)
        sol = _residual(p, ch, t_u, alloc, settings, cache)
        if sol is not None and sol.report.converged and (
            best is None or sol.report.objective_j < best.report.objective_j
        ):
            best = sol
        logger.debug(
            "dual ascent k=%d: nu1=%.3e nu2=%.3e O=%s", k, duals.nu1, duals.nu2, alloc[1]
        )

        if previous is not None and np.allclose(alloc, previous, rtol=1e-9, atol=1e-9):
            stable += 1
        elif _objective_settled(sol, last_objective):
            stable += 1
        else:
            stable = 0
        if stable >= 2:
            converged = True
            break
        previous = alloc
        last_objective = sol.report.objective_j if sol is not None and sol.report.converged else None

        step = 1.0 / math.sqrt(k)
        g_nu1 = (sum(q * o for q, o in zip(p.cycles_per_bit, bits_c)) - cap) / cap
        g_nu2 = sum(alpha_c) - 1.0
        reference = sol if sol is not None else best
        mu_hat = np.asarray(_eh_multipliers(reference, p.n_eh)) if reference else np.asarray(duals.mu)
        g_mu = np.zeros(p.n_eh)
        if reference is not None:
            closed = Allocation(alpha_c, bits_c, t_u)
            g_mu = np.array(
                [
                    -eh_balance(reference.design, closed, ch, p, i)
                    if math.isfinite(eh_balance(reference.design, closed, ch, p, i))
                    else 0.0
                    for i in range(p.n_eh)
                ]
            )
        if mu_step is None:
            mu_step = STEP_FRACTION * np.asarray(duals.mu) / np.maximum(np.abs(g_mu), 1e-300)
        mu_new = np.maximum(
            (1.0 - MU_DAMPING) * np.asarray(duals.mu) + MU_DAMPING * mu_hat + step * mu_step * g_mu,
            0.0,
        )
        duals = FotDuals(
            nu1=max(duals.nu1 + step * nu1_step * g_nu1, 0.0),
            nu2=max(duals.nu2 + step * nu2_step * g_nu2, 0.0),
            mu=tuple(float(m) for m in mu_new),
            lam=_rate_multipliers(reference, p.n_id) if reference else duals.lam,
        )

    if best is None:
        raise InfeasibleProgramError("dual ascent found no feasible primal point")
    report = replace(best.report, iterations=k, converged=converged and best.report.converged)
    if not converged:
        logger.warning("dual ascent: не сошёлся за %d итераций", max_iter)
    return DualSolution(best.design, best.allocation, report, duals)


__all__ = [
    "LambertDomainError",
    "lambert_w0",
    "phi_ratio",
    "FotDuals",
    "offload_closed_form",
    "device_lagrangian",
    "closed_form_allocation",
    "recover_allocation",
    "DualSolution",
    "dual_ascent_solve",
]
