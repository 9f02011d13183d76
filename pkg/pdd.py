"""pdd.py

Дизайн OOT: метод штрафной двойственной декомпозиции (PDD).

Согласование ã_i = t_u·α_i вынесено в штраф дополненного лагранжиана

    q = E(V) + Σ_i (1/2c) (α_i t_u − ã_i + c λ̃_i)²

Внутренний цикл: два блока BCD, V = (W, Λ, O, t_u, ã) через ipm и α через
проекцию на {0 <= α <= 1, Σα <= 1}. Внешний цикл: обновление λ̃ или c в
зависимости от нарушения ε̃ = max|α_i t_u − ã_i| и порога Δ = τ^{1/6}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ipm import IpmSettings, ip_solve
from model import (
    Allocation,
    BeamformingDesign,
    ChannelSet,
    ModelError,
    SolveReport,
    SystemParams,
    total_energy,
    validate,
)
from programs import (
    DecodedDesign,
    build_vblock_program,
    decode_design,
    decode_vblock_allocation,
    solve_fot,
)

logger = logging.getLogger(__name__)

C_INIT = 0.1
C_MIN = 1e-8
TAU_SHRINK = 0.6
DEFAULT_MAX_OUTER = 50
DEFAULT_MAX_INNER = 50
WARM_START_FRACTION = 0.8
PROJECTION_ITERS = 200


@dataclass(frozen=True)
class PddState:
    c: float = C_INIT  # штрафной параметр
    lambda_tilde: Tuple[float, ...] = ()
    tau: float = 1.0
    delta: float = 1.0
    k: int = 0  # внешний счётчик
    n: int = 0  # внутренний счётчик
    eps1: float = 1e-4
    eps2: float = 1e-6

    def __post_init__(self) -> None:
        if not self.c > 0.0:
            raise ModelError(f"penalty parameter must be positive, got {self.c!r}")
        object.__setattr__(self, "lambda_tilde", tuple(float(v) for v in self.lambda_tilde))

    @classmethod
    def initial(cls, n_eh: int) -> "PddState":
        return cls(lambda_tilde=(1.0,) * n_eh)


def _residuals(alloc: Allocation) -> List[float]:
    return [alloc.t_u * a - at for a, at in zip(alloc.alpha, alloc.a_tilde)]


def _check_state(alloc: Allocation, state: PddState) -> None:
    if len(state.lambda_tilde) != len(alloc.alpha):
        raise ModelError(
            f"state has {len(state.lambda_tilde)} duals, allocation {len(alloc.alpha)} devices"
        )


def al_objective(
    design: BeamformingDesign, alloc: Allocation, p: SystemParams, state: PddState
) -> float:
    """Дополненный лагранжиан q = E + Σ (1/2c)(α t_u − ã + c λ̃)²."""
    _check_state(alloc, state)
    c = state.c
    penalty = sum(
        (r + c * lam) ** 2 / (2.0 * c) for r, lam in zip(_residuals(alloc), state.lambda_tilde)
    )
    return total_energy(design, alloc, p) + penalty


def violation(alloc: Allocation) -> float:
    """ε̃ = max_i |α_i t_u − ã_i| (0 без устройств)."""
    return max((abs(r) for r in _residuals(alloc)), default=0.0)


def update_duals(state: PddState, alloc: Allocation) -> PddState:
    """λ̃_i += (α_i t_u − ã_i)/c."""
    _check_state(alloc, state)
    lam = tuple(l + r / state.c for l, r in zip(state.lambda_tilde, _residuals(alloc)))
    return replace(state, lambda_tilde=lam)


def update_penalty(state: PddState, p: SystemParams) -> PddState:
    """c ← θ·c с нижней границей C_MIN."""
    theta = p.pdd_theta
    if not 0.0 < theta < 1.0:
        raise ModelError(f"pdd_theta must lie in (0, 1), got {theta!r}")
    return replace(state, c=max(theta * state.c, C_MIN))


def next_threshold(state: PddState) -> PddState:
    """τ ← 0.6τ, Δ ← τ^{1/6}, k ← k + 1."""
    tau = TAU_SHRINK * state.tau
    return replace(state, tau=tau, delta=tau ** (1.0 / 6.0), k=state.k + 1, n=0)


def project_bandwidth(targets: Sequence[float]) -> Tuple[float, ...]:
    """Евклидова проекция на {0 <= α_i <= 1, Σα_i <= 1}.

    α_i = clip(g_i − ν, 0, 1), ν >= 0 подбирается бисекцией так, что Σα = 1.
    """
    g = np.asarray(targets, dtype=float)
    if g.size == 0:
        return ()
    clipped = np.clip(g, 0.0, 1.0)
    if float(np.sum(clipped)) <= 1.0:
        return tuple(float(v) for v in clipped)
    lo, hi = 0.0, float(np.max(g))
    for _ in range(PROJECTION_ITERS):
        nu = 0.5 * (lo + hi)
        if float(np.sum(np.clip(g - nu, 0.0, 1.0))) > 1.0:
            lo = nu
        else:
            hi = nu
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    alpha = np.clip(g - hi, 0.0, 1.0)
    return tuple(float(v) for v in alpha)


def alpha_block(alloc: Allocation, state: PddState) -> Tuple[float, ...]:
    """argmin Σ(α_i t_u − ã_i + cλ̃_i)² по допустимым α (V зафиксирован).

    При t_u > 0 это проекция целей g_i = (ã_i − cλ̃_i)/t_u.
    """
    _check_state(alloc, state)
    if alloc.t_u <= 0.0:
        raise ModelError("alpha_block requires t_u > 0")
    targets = [
        (at - state.c * lam) / alloc.t_u for at, lam in zip(alloc.a_tilde, state.lambda_tilde)
    ]
    return project_bandwidth(targets)


class PddTraceRow(NamedTuple):
    k: int
    q: float
    violation: float
    penalty: float


class OotSolution(NamedTuple):
    design: BeamformingDesign
    allocation: Allocation
    report: SolveReport
    trace: List[PddTraceRow]
    inner_history: List[List[float]]


def _vblock(
    p: SystemParams,
    ch: ChannelSet,
    alpha: Sequence[float],
    state: PddState,
    previous: Tuple[BeamformingDesign, Allocation],
    settings: IpmSettings,
) -> Tuple[BeamformingDesign, Allocation, DecodedDesign]:
    prog = build_vblock_program(p, ch, alpha, state, previous)
    sol = ip_solve(prog, settings)
    decoded = decode_design(sol.point, p, ch)
    return decoded.design, decode_vblock_allocation(sol.point, p, alpha), decoded


def _warm_start(
    p: SystemParams, ch: ChannelSet, settings: IpmSettings
) -> Tuple[BeamformingDesign, Allocation]:
    t_u = WARM_START_FRACTION * p.block_time_s
    base = solve_fot(p, ch, t_u, "local_only", settings)
    alpha0 = (min(1.0 / p.n_eh, 1.0),) * p.n_eh if p.n_eh else ()
    return base.design, Allocation(alpha0, (0.0,) * p.n_eh, t_u)


def solve_oot(
    p: SystemParams,
    ch: ChannelSet,
    settings: Optional[IpmSettings] = None,
    max_outer: int = DEFAULT_MAX_OUTER,
    max_inner: int = DEFAULT_MAX_INNER,
    state: Optional[PddState] = None,
) -> OotSolution:
    """Полный цикл PDD; на выходе ã := t_u·α и отчёт validate.

    trace: по строке на внешнюю итерацию (k, q, ε̃, c).
    inner_history[k]: q в начале внешней итерации k и после каждого прохода BCD.
    """
    settings = settings or IpmSettings()
    ch.check(p)
    state = state or PddState.initial(p.n_eh)
    design, alloc = _warm_start(p, ch, settings)

    decoded: Optional[DecodedDesign] = None
    trace: List[PddTraceRow] = []
    history: List[List[float]] = []
    converged = False
    eps = violation(alloc)
    for _ in range(max_outer):
        q_prev = al_objective(design, alloc, p, state)
        sweeps = [q_prev]
        q = q_prev
        for n in range(1, max_inner + 1):
            design, alloc, decoded = _vblock(p, ch, alloc.alpha, state, (design, alloc), settings)
            alloc = replace(alloc, alpha=alpha_block(alloc, state))
            q = al_objective(design, alloc, p, state)
            sweeps.append(q)
            state = replace(state, n=n)
            if abs(q - q_prev) <= state.eps1:
                break
            q_prev = q
        else:
            logger.warning("PDD k=%d: внутренний цикл не сошёлся за %d проходов", state.k, max_inner)
        history.append(sweeps)

        eps = violation(alloc)
        trace.append(PddTraceRow(state.k, q, eps, state.c))
        logger.debug("PDD k=%d: q=%.9e eps=%.3e c=%.1e n=%d", state.k, q, eps, state.c, state.n)
        if eps <= state.eps2:
            converged = True
            break
        if eps <= state.delta:
            state = update_duals(state, alloc)
        else:
            if state.c <= C_MIN:
                logger.warning("PDD: штраф достиг нижней границы %.1e при eps=%.3e", C_MIN, eps)
                break
            state = update_penalty(state, p)
        state = next_threshold(state)

    final = alloc.with_consensus()
    report = validate(design, final, ch, p, settings.feas_tol)
    report = replace(
        report,
        iterations=len(trace),
        converged=converged and report.converged,
        rank_ratios=decoded.sdr_ratios if decoded else report.rank_ratios,
        reconstruction_shift=decoded.shift if decoded else 0.0,
    )
    if not converged:
        logger.warning("PDD: не сошёлся, eps=%.3e после %d итераций", eps, len(trace))
    return OotSolution(design, final, report, trace, history)


__all__ = [
    "PddState",
    "al_objective",
    "violation",
    "update_duals",
    "update_penalty",
    "next_threshold",
    "project_bandwidth",
    "alpha_block",
    "PddTraceRow",
    "OotSolution",
    "solve_oot",
]
