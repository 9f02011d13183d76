"""channels.py

Генерация каналов численного раздела:
- EH-устройства: d ~ U[5, 10] м, райсовский канал (K = 3) с LOS-вектором ULA
- ID-устройства: d ~ U[15, 20] м, рэлеевский канал
- потери на трассе gain = g_ref · d^(−exp), d >= 1 м

Случайность детерминирована: у каждого устройства свой поток Philox,
ключ SeedSequence(seed, spawn_key=(тип, индекс)). Поэтому смена N_eh не меняет
каналы ID-устройств.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from model import ChannelSet, SystemParams

logger = logging.getLogger(__name__)

KIND_EH = 1
KIND_ID = 2
KIND_UL = 3

FIXTURE_HEADER = "swiptfog channels v1"


class ChannelError(ValueError):
    """Неверная конфигурация каналов или файл фикстуры."""


@dataclass(frozen=True)
class ChannelConfig:
    eh_dist_range_m: Tuple[float, float] = (5.0, 10.0)
    id_dist_range_m: Tuple[float, float] = (15.0, 20.0)
    rician_k: float = 3.0  # линейный; math.inf даёт чистый LOS
    pathloss_exp: float = 2.0
    reference_gain_at_1m: float = 1.0
    seed: int = 0
    reciprocal: bool = True  # ul_eh = dl_eh

    def __post_init__(self) -> None:
        for name in ("eh_dist_range_m", "id_dist_range_m"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (1.0 <= lo <= hi):
                raise ChannelError(f"{name}: need 1 <= low <= high, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if not self.rician_k >= 0.0:
            raise ChannelError("rician_k must be >= 0")
        if not self.pathloss_exp > 0.0:
            raise ChannelError("pathloss_exp must be positive")
        if not self.reference_gain_at_1m > 0.0:
            raise ChannelError("reference_gain_at_1m must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ChannelError("seed must be an unsigned 64-bit integer")


def pathloss_gain(d_m: float, cfg: ChannelConfig) -> float:
    """g_ref · d^(−exp); модель не определена ближе 1 м."""
    if d_m < 1.0:
        raise ChannelError(f"distance {d_m!r} m is below the 1 m reference")
    return cfg.reference_gain_at_1m * d_m ** (-cfg.pathloss_exp)


def device_rng(seed: int, kind: int, index: int) -> np.random.Generator:
    """Независимый поток устройства (тип, индекс)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(kind, index))
    return np.random.Generator(np.random.Philox(ss))


def rayleigh(rng: np.random.Generator, size: Union[int, Tuple[int, ...]]) -> NDArray[np.complex128]:
    """CN(0, 1): единичная дисперсия на элемент."""
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return (z / math.sqrt(2.0)).astype(np.complex128)


def steering_vector(n_antennas: int, angle_rad: float) -> NDArray[np.complex128]:
    """ULA с шагом λ/2: a_k = exp(iπ k sin φ)."""
    k = np.arange(n_antennas)
    return np.exp(1j * math.pi * k * math.sin(angle_rad)).astype(np.complex128)


def rician(
    rng: np.random.Generator,
    los: NDArray[np.complex128],
    k_factor: float,
    size: Union[int, Tuple[int, ...], None] = None,
) -> NDArray[np.complex128]:
    """sqrt(K/(K+1))·a + sqrt(1/(K+1))·g; E|h_k|² = 1."""
    shape = los.shape if size is None else size
    if math.isinf(k_factor):
        return np.broadcast_to(los, shape).astype(np.complex128)
    w_los = math.sqrt(k_factor / (k_factor + 1.0))
    w_nlos = math.sqrt(1.0 / (k_factor + 1.0))
    return w_los * los + w_nlos * rayleigh(rng, shape)


def _eh_channel(
    p: SystemParams, cfg: ChannelConfig, i: int
) -> Tuple[NDArray[np.complex128], float, float]:
    rng = device_rng(cfg.seed, KIND_EH, i)
    d = float(rng.uniform(*cfg.eh_dist_range_m))
    angle = float(rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
    gain = pathloss_gain(d, cfg)
    los = steering_vector(p.n_antennas, angle)
    h = math.sqrt(gain) * rician(rng, los, cfg.rician_k)
    return h, gain, angle


def _id_channel(p: SystemParams, cfg: ChannelConfig, j: int) -> NDArray[np.complex128]:
    rng = device_rng(cfg.seed, KIND_ID, j)
    d = float(rng.uniform(*cfg.id_dist_range_m))
    return math.sqrt(pathloss_gain(d, cfg)) * rayleigh(rng, p.n_antennas)


def gen_channels(p: SystemParams, cfg: ChannelConfig) -> ChannelSet:
    """Реализация каналов для (p, cfg); при одинаковом seed результат побитово одинаков."""
    n = p.n_antennas
    dl_eh = np.zeros((p.n_eh, n), dtype=np.complex128)
    ul_eh = np.zeros((p.n_eh, n), dtype=np.complex128)
    for i in range(p.n_eh):
        h, gain, angle = _eh_channel(p, cfg, i)
        dl_eh[i] = h
        if cfg.reciprocal:
            ul_eh[i] = h
        else:
            ul_rng = device_rng(cfg.seed, KIND_UL, i)
            ul_eh[i] = math.sqrt(gain) * rician(
                ul_rng, steering_vector(n, angle), cfg.rician_k
            )
    dl_id = np.zeros((p.n_id, n), dtype=np.complex128)
    for j in range(p.n_id):
        dl_id[j] = _id_channel(p, cfg, j)
    logger.debug("channels: seed=%d, %d EH, %d ID, N_t=%d", cfg.seed, p.n_eh, p.n_id, n)
    return ChannelSet(dl_eh, dl_id, ul_eh)


# ===================== ФИКСТУРЫ =====================


def save_channels(ch: ChannelSet, path: Union[str, Path]) -> None:
    """Текстовая фикстура: строка "re im" на элемент, порядок dl_eh, dl_id, ul_eh,
    внутри: устройство за устройством, антенны по возрастанию."""
    entries = np.concatenate(
        [ch.dl_eh.reshape(-1), ch.dl_id.reshape(-1), ch.ul_eh.reshape(-1)]
    )
    header = (
        f"{FIXTURE_HEADER}\n"
        f"n_antennas={ch.n_antennas} n_eh={ch.n_eh} n_id={ch.n_id}\n"
        "order: dl_eh, dl_id, ul_eh (device-major, antenna-minor)"
    )
    table = np.column_stack([entries.real, entries.imag])
    np.savetxt(Path(path), table, fmt="%.17g", header=header, comments="# ", encoding="utf-8")


def _dims(lines: List[str]) -> Tuple[int, int, int]:
    for line in lines:
        body = line.lstrip("#").strip()
        if body.startswith("n_antennas="):
            try:
                fields = dict(kv.split("=", 1) for kv in body.split())
                return int(fields["n_antennas"]), int(fields["n_eh"]), int(fields["n_id"])
            except (KeyError, ValueError) as e:
                raise ChannelError(f"malformed dimension line: {line!r}") from e
    raise ChannelError("fixture has no dimension line")


def load_channels(path: Union[str, Path]) -> ChannelSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ChannelError(f"cannot read {path}: {e}") from e
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    if not header or FIXTURE_HEADER not in header[0]:
        raise ChannelError(f"{path}: not a channel fixture")
    n, n_eh, n_id = _dims(header)
    try:
        table = np.loadtxt(path, comments="#", ndmin=2, encoding="utf-8")
    except ValueError as e:
        raise ChannelError(f"{path}: {e}") from e
    expected = n * (2 * n_eh + n_id)
    if table.shape != (expected, 2) and not (expected == 0 and table.size == 0):
        raise ChannelError(f"{path}: expected {expected} entries, found {table.shape[0]}")
    values = (table[:, 0] + 1j * table[:, 1]) if table.size else np.zeros(0, np.complex128)
    a = n_eh * n
    b = a + n_id * n
    return ChannelSet(
        values[:a].reshape(n_eh, n),
        values[a:b].reshape(n_id, n),
        values[b:].reshape(n_eh, n),
    )


__all__ = [
    "ChannelError",
    "ChannelConfig",
    "pathloss_gain",
    "device_rng",
    "rayleigh",
    "rician",
    "steering_vector",
    "gen_channels",
    "save_channels",
    "load_channels",
]
