# model.py
"""
System model of the SWIPT-aware fog network and its constraint evaluators.

Units and variable conventions used in code:
- Time: seconds (T, t_u)
- Bandwidth: Hz (B); noise PSD δ²: W/Hz, enters formulas only as δ² and B·δ²
- Power: W; energy: J; task sizes and offloaded data: bits
- Fog CPU: cycles/s (F); per-device workload q_i: cycles/bit

Key formulas implemented below:

1) Harvested energy of EH device i
    E_i^(eh) = ζ_i · Tr(H_i (Σ_j W_j + Λ)) · T,      H_i = h_i h_i^H

2) SINR and rate of ID device j
    sinr_j = Tr(G_j W_j) / (Σ_{k≠j} Tr(G_j W_k) + Tr(G_j Λ) + B δ²)
    R_j = B · log2(1 + sinr_j)

3) Uplink offloading power (0 when O_i = 0)
    p_i = α_i · B δ² · (2^{O_i / (α_i B t_u)} − 1) / ‖h_ul,i‖²

4) Local computing energy
    E_i^(loc) = κ_i q_i³ (D_i − O_i)³ / T²

5) Total required energy
    E = Σ_j Tr(W_j)·T + Tr(Λ)·T + β Σ_i O_i

`validate` reports the slack of every constraint:
    rate_j  = Tr(G_j W_j) − γ_j (interference_j + B δ²)
    eh_i    = E_i^(eh) − (E_i^(loc) + p_i t_u + E_c)
    fog     = F (T − t_u) − Σ_i q_i O_i
    bandwidth = 1 − Σ_i α_i
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from hermitian import (
    ComplexMatrix,
    HermitianError,
    eig_hermitian,
    rank_one_extract,
    trace_product,
)

FEAS_TOL = 1e-8
RANK_TOL = 1e-5
LOCAL_OVERSHOOT_RTOL = 1e-9


class ModelError(ValueError):
    """Неверные входные данные модели (размерности, диапазоны)."""


class InfeasibleAllocationError(ModelError):
    """O_i > 0 при α_i = 0 (или t_u = 0): выгрузка невозможна."""


def _tuple(values: Any, n: int, name: str) -> Tuple[float, ...]:
    if np.isscalar(values):
        return tuple(float(values) for _ in range(n))  # type: ignore[arg-type]
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise ModelError(f"{name}: expected {n} values, got {len(out)}")
    return out


# ===================== ПАРАМЕТРЫ СИСТЕМЫ =====================


@dataclass(frozen=True)
class SystemParams:
    n_antennas: int  # N_t
    n_eh: int
    n_id: int
    block_time_s: float  # T
    bandwidth_hz: float  # B
    noise_psd_w_per_hz: float  # δ²
    fog_cycles_per_s: float  # F
    fog_energy_per_bit_j: float  # β
    circuit_energy_j: float  # E_c, per EH device
    conversion_eff: Tuple[float, ...]  # ζ_i
    cap_coeff: Tuple[float, ...]  # κ_i
    cycles_per_bit: Tuple[float, ...]  # q_i
    task_bits: Tuple[float, ...]  # D_i
    sinr_target: Tuple[float, ...]  # γ_j, linear
    pdd_theta: float = 0.1

    def __post_init__(self) -> None:
        if self.n_antennas < 1 or self.n_eh < 0 or self.n_id < 0:
            raise ModelError("n_antennas must be >= 1, device counts >= 0")
        for name, n in (
            ("conversion_eff", self.n_eh),
            ("cap_coeff", self.n_eh),
            ("cycles_per_bit", self.n_eh),
            ("task_bits", self.n_eh),
            ("sinr_target", self.n_id),
        ):
            object.__setattr__(self, name, _tuple(getattr(self, name), n, name))
        for name in (
            "block_time_s",
            "bandwidth_hz",
            "noise_psd_w_per_hz",
            "fog_cycles_per_s",
            "fog_energy_per_bit_j",
            "circuit_energy_j",
        ):
            value = float(getattr(self, name))
            if not (value > 0.0 and math.isfinite(value)):
                raise ModelError(f"{name} must be positive, got {value!r}")
        if any(not (0.0 < z <= 1.0) for z in self.conversion_eff):
            raise ModelError("conversion_eff must lie in (0, 1]")
        if any(k <= 0.0 for k in self.cap_coeff) or any(
            q <= 0.0 for q in self.cycles_per_bit
        ):
            raise ModelError("cap_coeff and cycles_per_bit must be positive")
        if any(d < 0.0 for d in self.task_bits):
            raise ModelError("task_bits must be non-negative")
        if any(g < 0.0 for g in self.sinr_target):
            raise ModelError("sinr_target must be non-negative")
        if not (0.0 < self.pdd_theta < 1.0):
            raise ModelError("pdd_theta must lie in (0, 1)")

    @classmethod
    def defaults(
        cls, n_antennas: int = 6, n_eh: int = 2, n_id: int = 2
    ) -> "SystemParams":
        """Параметры численного раздела: T = 2 с, B = 2 МГц, δ² = −80 дБм/Гц и т.д."""
        block_time = 2.0
        return cls(
            n_antennas=n_antennas,
            n_eh=n_eh,
            n_id=n_id,
            block_time_s=block_time,
            bandwidth_hz=2e6,
            noise_psd_w_per_hz=1e-11,
            fog_cycles_per_s=4e9,
            fog_energy_per_bit_j=1e-4,
            circuit_energy_j=1e-4 * block_time,
            conversion_eff=(0.8,) * n_eh,
            cap_coeff=(1e-24,) * n_eh,
            cycles_per_bit=(1e3,) * n_eh,
            task_bits=(1e4,) * n_eh,
            sinr_target=(1.0,) * n_id,
            pdd_theta=0.1,
        )

    @classmethod
    def from_rate_targets(
        cls, rate_targets_bps: Sequence[float], **fields: Any
    ) -> "SystemParams":
        """Строит параметры по целевым скоростям R_j: γ_j = 2^{R_j/B} − 1."""
        bandwidth = float(fields["bandwidth_hz"])
        gammas = tuple(2.0 ** (float(r) / bandwidth) - 1.0 for r in rate_targets_bps)
        return cls(sinr_target=gammas, **fields)

    @property
    def noise_power_w(self) -> float:
        """B·δ²."""
        return self.bandwidth_hz * self.noise_psd_w_per_hz

    @property
    def rate_targets(self) -> Tuple[float, ...]:
        return tuple(self.bandwidth_hz * math.log2(1.0 + g) for g in self.sinr_target)

    def with_sinr_db(self, db: float) -> "SystemParams":
        return replace(self, sinr_target=(10.0 ** (db / 10.0),) * self.n_id)

    def with_task_bits(self, bits: float) -> "SystemParams":
        return replace(self, task_bits=(float(bits),) * self.n_eh)

    def with_block_time(self, block_time_s: float) -> "SystemParams":
        """Новый T; E_c масштабируется вместе с T (E_c задан как доля T)."""
        ratio = self.circuit_energy_j / self.block_time_s
        return replace(
            self, block_time_s=float(block_time_s), circuit_energy_j=ratio * block_time_s
        )

    def with_users(self, n_eh: int, n_id: int) -> "SystemParams":
        """Меняет число устройств, размножая параметры первого устройства."""

        def first(values: Tuple[float, ...], fallback: float) -> float:
            return values[0] if values else fallback

        base = SystemParams.defaults(self.n_antennas, 1, 1)
        return replace(
            self,
            n_eh=n_eh,
            n_id=n_id,
            conversion_eff=(first(self.conversion_eff, base.conversion_eff[0]),) * n_eh,
            cap_coeff=(first(self.cap_coeff, base.cap_coeff[0]),) * n_eh,
            cycles_per_bit=(first(self.cycles_per_bit, base.cycles_per_bit[0]),) * n_eh,
            task_bits=(first(self.task_bits, base.task_bits[0]),) * n_eh,
            sinr_target=(first(self.sinr_target, base.sinr_target[0]),) * n_id,
        )


# ===================== КАНАЛЫ =====================


def _channel_matrix(values: ArrayLike, width: Optional[int]) -> NDArray[np.complex128]:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.size == 0:
        return np.zeros((0, width or 0), dtype=np.complex128)
    return np.atleast_2d(arr)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Каналы: строки dl_eh[i], dl_id[j], ul_eh[i] длины N_t."""

    dl_eh: NDArray[np.complex128]
    dl_id: NDArray[np.complex128]
    ul_eh: NDArray[np.complex128]

    def __post_init__(self) -> None:
        widths = [
            np.asarray(a).shape[-1]
            for a in (self.dl_eh, self.dl_id, self.ul_eh)
            if np.asarray(a).size
        ]
        width = widths[0] if widths else None
        if any(w != width for w in widths):
            raise ModelError("channel vectors must share the antenna count")
        dl_eh = _channel_matrix(self.dl_eh, width)
        dl_id = _channel_matrix(self.dl_id, width)
        ul_eh = _channel_matrix(self.ul_eh, width)
        if dl_eh.shape != ul_eh.shape:
            raise ModelError("dl_eh and ul_eh must have the same shape")
        for arr in (dl_eh, dl_id, ul_eh):
            arr.setflags(write=False)
        object.__setattr__(self, "dl_eh", dl_eh)
        object.__setattr__(self, "dl_id", dl_id)
        object.__setattr__(self, "ul_eh", ul_eh)
        if np.any(self.ul_gain <= 0.0):
            raise ModelError("uplink channel gain must be positive")

    @property
    def n_antennas(self) -> int:
        return int(self.dl_eh.shape[1] if self.dl_eh.size else self.dl_id.shape[1])

    @property
    def n_eh(self) -> int:
        return int(self.dl_eh.shape[0])

    @property
    def n_id(self) -> int:
        return int(self.dl_id.shape[0])

    @cached_property
    def gram_id(self) -> NDArray[np.complex128]:
        """G_j, форма (n_id, N_t, N_t)."""
        return np.einsum("ja,jb->jab", self.dl_id, self.dl_id.conj())

    @cached_property
    def gram_eh(self) -> NDArray[np.complex128]:
        """H_{0,i}, форма (n_eh, N_t, N_t)."""
        return np.einsum("ia,ib->iab", self.dl_eh, self.dl_eh.conj())

    @cached_property
    def ul_gain(self) -> NDArray[np.float64]:
        """‖h_{i,0}‖²."""
        return np.sum(np.abs(self.ul_eh) ** 2, axis=1)

    def check(self, p: SystemParams) -> None:
        if (self.n_eh, self.n_id) != (p.n_eh, p.n_id) or (
            (self.n_eh or self.n_id) and self.n_antennas != p.n_antennas
        ):
            raise ModelError(
                f"channels ({self.n_eh} EH, {self.n_id} ID, {self.n_antennas} ant) "
                f"do not match parameters ({p.n_eh}, {p.n_id}, {p.n_antennas})"
            )


# ===================== РЕШЕНИЕ =====================


@dataclass(frozen=True, eq=False)
class BeamformingDesign:
    info_cov: Tuple[ComplexMatrix, ...]  # W_j, W
    energy_cov: ComplexMatrix  # Λ, W
    beams: Optional[Tuple[NDArray[np.complex128], ...]] = None

    def __post_init__(self) -> None:
        info = tuple(np.asarray(w, dtype=np.complex128) for w in self.info_cov)
        energy = np.asarray(self.energy_cov, dtype=np.complex128)
        n = energy.shape[0]
        if energy.shape != (n, n) or any(w.shape != (n, n) for w in info):
            raise ModelError("covariance matrices must be square and share N_t")
        object.__setattr__(self, "info_cov", info)
        object.__setattr__(self, "energy_cov", energy)

    @classmethod
    def zeros(cls, p: SystemParams) -> "BeamformingDesign":
        n = p.n_antennas
        z = np.zeros((n, n), dtype=np.complex128)
        return cls(tuple(z.copy() for _ in range(p.n_id)), z.copy())

    @property
    def n_antennas(self) -> int:
        return int(self.energy_cov.shape[0])

    @property
    def total_cov(self) -> ComplexMatrix:
        """Σ_j W_j + Λ."""
        total = self.energy_cov.copy()
        for w in self.info_cov:
            total = total + w
        return total

    @property
    def transmit_power_w(self) -> float:
        return float(np.real(np.trace(self.total_cov)))

    def with_beams(self, tol: float = RANK_TOL) -> Tuple["BeamformingDesign", Tuple[float, ...]]:
        """Извлекает лучи w_j и возвращает отношения λ_2/λ_max по каждой W_j."""
        beams = []
        ratios = []
        for w in self.info_cov:
            beam, ratio = rank_one_extract(w, tol)
            beams.append(beam)
            ratios.append(ratio)
        return replace(self, beams=tuple(beams)), tuple(ratios)


@dataclass(frozen=True)
class Allocation:
    alpha: Tuple[float, ...]  # доли полосы α_i
    offload_bits: Tuple[float, ...]  # O_i, бит
    t_u: float  # время выгрузки, с
    a_tilde: Tuple[float, ...] = field(default=())  # ã_i = t_u·α_i, с

    def __post_init__(self) -> None:
        n = len(tuple(self.alpha))
        object.__setattr__(self, "alpha", _tuple(self.alpha, n, "alpha"))
        object.__setattr__(
            self, "offload_bits", _tuple(self.offload_bits, n, "offload_bits")
        )
        object.__setattr__(self, "t_u", float(self.t_u))
        if len(tuple(self.a_tilde)) == 0 and n > 0:
            object.__setattr__(
                self, "a_tilde", tuple(self.t_u * a for a in self.alpha)
            )
        else:
            object.__setattr__(self, "a_tilde", _tuple(self.a_tilde, n, "a_tilde"))

    @classmethod
    def local_only(cls, p: SystemParams, t_u: float) -> "Allocation":
        return cls((0.0,) * p.n_eh, (0.0,) * p.n_eh, t_u)

    def with_consensus(self) -> "Allocation":
        """ã := t_u·α."""
        return replace(self, a_tilde=tuple(self.t_u * a for a in self.alpha))


@dataclass(frozen=True)
class SolveReport:
    objective_j: float
    rate_slack: Tuple[float, ...]
    eh_slack: Tuple[float, ...]
    fog_slack: float
    bandwidth_slack: float
    box_slack: float
    psd_slack: float
    iterations: int = 0
    converged: bool = False
    rank_ratios: Tuple[float, ...] = ()  # λ_2/λ_max матриц W_j до восстановления ранга 1
    reconstruction_shift: float = 0.0

    @property
    def min_slack(self) -> float:
        values = [
            *self.rate_slack,
            *self.eh_slack,
            self.fog_slack,
            self.bandwidth_slack,
            self.box_slack,
            self.psd_slack,
        ]
        return min(values)

    @property
    def max_rank_ratio(self) -> float:
        return max(self.rank_ratios) if self.rank_ratios else 0.0


class EnergyBreakdown(NamedTuple):
    info_j: float  # Σ Tr(W_j)·T
    energy_j: float  # Tr(Λ)·T
    fog_j: float  # β Σ O_i

    @property
    def total_j(self) -> float:
        return self.info_j + self.energy_j + self.fog_j


# ===================== ВЫЧИСЛЕНИЯ =====================


def _check_design(design: BeamformingDesign, p: SystemParams) -> None:
    if design.n_antennas != p.n_antennas or len(design.info_cov) != p.n_id:
        raise ModelError(
            f"design has {len(design.info_cov)} W of size {design.n_antennas}, "
            f"expected {p.n_id} of size {p.n_antennas}"
        )


def _check_alloc(alloc: Allocation, p: SystemParams) -> None:
    if len(alloc.alpha) != p.n_eh:
        raise ModelError(f"allocation has {len(alloc.alpha)} devices, expected {p.n_eh}")


def _index(i: int, n: int, kind: str) -> None:
    if not (0 <= i < n):
        raise ModelError(f"{kind} index {i} out of range 0..{n - 1}")


def harvested_energy(
    design: BeamformingDesign, ch: ChannelSet, p: SystemParams, i: int
) -> float:
    """ζ_i · Tr(H_i (ΣW + Λ)) · T, Дж."""
    _check_design(design, p)
    ch.check(p)
    _index(i, p.n_eh, "EH")
    power = trace_product(ch.gram_eh[i], design.total_cov)
    return p.conversion_eff[i] * power * p.block_time_s


def sinr_and_rate(
    design: BeamformingDesign, ch: ChannelSet, p: SystemParams, j: int
) -> Tuple[float, float]:
    """(SINR, скорость в бит/с) ID-устройства j."""
    _check_design(design, p)
    ch.check(p)
    _index(j, p.n_id, "ID")
    g = ch.gram_id[j]
    signal = trace_product(g, design.info_cov[j])
    interference = sum(
        trace_product(g, w) for k, w in enumerate(design.info_cov) if k != j
    )
    interference += trace_product(g, design.energy_cov) + p.noise_power_w
    sinr = signal / interference
    return sinr, p.bandwidth_hz * math.log2(1.0 + max(sinr, 0.0))


def offload_power(alloc: Allocation, ch: ChannelSet, p: SystemParams, i: int) -> float:
    """p_i = α B δ² (2^{O/(α B t_u)} − 1) / ‖h_ul‖², Вт; 0 при O = 0."""
    _check_alloc(alloc, p)
    _index(i, p.n_eh, "EH")
    bits = alloc.offload_bits[i]
    if bits == 0.0:
        return 0.0
    alpha = alloc.alpha[i]
    if alpha <= 0.0 or alloc.t_u <= 0.0:
        raise InfeasibleAllocationError(
            f"device {i}: O={bits!r} bits with alpha={alpha!r}, t_u={alloc.t_u!r}"
        )
    exponent = bits * math.log(2.0) / (alpha * p.bandwidth_hz * alloc.t_u)
    return alpha * p.noise_power_w * math.expm1(exponent) / float(ch.ul_gain[i])


def _local_energy(bits_left: float, p: SystemParams, i: int) -> float:
    kq3 = p.cap_coeff[i] * p.cycles_per_bit[i] ** 3
    return kq3 * max(bits_left, 0.0) ** 3 / p.block_time_s**2


def local_energy(alloc: Allocation, p: SystemParams, i: int) -> float:
    """κ q³ (D − O)³ / T², Дж."""
    _check_alloc(alloc, p)
    _index(i, p.n_eh, "EH")
    bits = alloc.offload_bits[i]
    task = p.task_bits[i]
    if bits < 0.0 or bits > task * (1.0 + LOCAL_OVERSHOOT_RTOL) + LOCAL_OVERSHOOT_RTOL:
        raise ModelError(f"device {i}: offload {bits!r} outside [0, {task!r}]")
    return _local_energy(task - bits, p, i)


def energy_breakdown(
    design: BeamformingDesign, alloc: Allocation, p: SystemParams
) -> EnergyBreakdown:
    info = sum(float(np.real(np.trace(w))) for w in design.info_cov)
    energy = float(np.real(np.trace(design.energy_cov)))
    return EnergyBreakdown(
        info * p.block_time_s,
        energy * p.block_time_s,
        p.fog_energy_per_bit_j * sum(alloc.offload_bits),
    )


def total_energy(design: BeamformingDesign, alloc: Allocation, p: SystemParams) -> float:
    """Σ Tr(W_j)·T + Tr(Λ)·T + β Σ O_i, Дж."""
    _check_design(design, p)
    _check_alloc(alloc, p)
    return energy_breakdown(design, alloc, p).total_j


def eh_balance(
    design: BeamformingDesign,
    alloc: Allocation,
    ch: ChannelSet,
    p: SystemParams,
    i: int,
) -> float:
    """E^(eh) − (E^(loc) + p_i t_u + E_c); отрицательное значение = нарушение."""
    harvested = harvested_energy(design, ch, p, i)
    try:
        uplink = offload_power(alloc, ch, p, i) * alloc.t_u
    except InfeasibleAllocationError:
        return -math.inf
    local = _local_energy(p.task_bits[i] - alloc.offload_bits[i], p, i)
    return harvested - (local + uplink + p.circuit_energy_j)


def validate(
    design: BeamformingDesign,
    alloc: Allocation,
    ch: ChannelSet,
    p: SystemParams,
    feas_tol: float = FEAS_TOL,
) -> SolveReport:
    """Запас каждого ограничения; не бросает исключений при недопустимости."""
    _check_design(design, p)
    _check_alloc(alloc, p)
    ch.check(p)
    rate = []
    for j in range(p.n_id):
        g = ch.gram_id[j]
        signal = trace_product(g, design.info_cov[j])
        interference = sum(
            trace_product(g, w) for k, w in enumerate(design.info_cov) if k != j
        ) + trace_product(g, design.energy_cov)
        rate.append(signal - p.sinr_target[j] * (interference + p.noise_power_w))
    eh = [eh_balance(design, alloc, ch, p, i) for i in range(p.n_eh)]
    fog = p.fog_cycles_per_s * (p.block_time_s - alloc.t_u) - sum(
        q * o for q, o in zip(p.cycles_per_bit, alloc.offload_bits)
    )
    bandwidth = 1.0 - sum(alloc.alpha)
    box = [alloc.t_u, p.block_time_s - alloc.t_u]
    for i in range(p.n_eh):
        box += [
            alloc.alpha[i],
            1.0 - alloc.alpha[i],
            alloc.offload_bits[i],
            p.task_bits[i] - alloc.offload_bits[i],
        ]
    psd = math.inf
    ratios = []
    try:
        for w in (*design.info_cov, design.energy_cov):
            psd = min(psd, float(eig_hermitian(w)[0][0]))
        ratios = [rank_one_extract(w, RANK_TOL)[1] for w in design.info_cov]
    except HermitianError:
        psd = -math.inf
    report = SolveReport(
        objective_j=total_energy(design, alloc, p),
        rate_slack=tuple(rate),
        eh_slack=tuple(eh),
        fog_slack=fog,
        bandwidth_slack=bandwidth,
        box_slack=min(box),
        psd_slack=psd,
        rank_ratios=tuple(ratios),
    )
    return replace(report, converged=report.min_slack >= -feas_tol)


__all__ = [
    "ModelError",
    "InfeasibleAllocationError",
    "SystemParams",
    "ChannelSet",
    "BeamformingDesign",
    "Allocation",
    "SolveReport",
    "EnergyBreakdown",
    "harvested_energy",
    "sinr_and_rate",
    "offload_power",
    "local_energy",
    "energy_breakdown",
    "total_energy",
    "eh_balance",
    "validate",
]
