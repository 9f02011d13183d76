# config.py
"""Конфигурация и журналирование.

Слои (по возрастанию приоритета): встроенные значения по умолчанию, файл
пользователя QSettings (IniFormat, UserScope, "SwiptFog"/"swiptfog"), файл
--config, флаги командной строки (их накладывает main.py).

Группы INI: [system], [channel], [experiment], [solver]; ключи совпадают с
полями SystemParams / ChannelConfig / ExperimentSpec / IpmSettings.
Поэлементные ключи принимают число (на все устройства) или список через запятую.
"""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

from PyQt5.QtCore import QSettings

from channels import ChannelConfig, ChannelError
from ipm import IpmSettings, ProgramError
from model import ModelError, SystemParams

logger = logging.getLogger(__name__)

ORGANIZATION = "SwiptFog"
APPLICATION = "swiptfog"
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
GROUPS = ("system", "channel", "experiment", "solver")

RawConfig = Dict[str, Dict[str, str]]


class ConfigError(ValueError):
    """Неверное значение в файле конфигурации или флаге."""


# ===================== КАТАЛОГИ И ЖУРНАЛ =====================


def writable_app_dir() -> Path:
    """%LOCALAPPDATA%\\SwiptFog в Windows, ~/SwiptFog в остальных системах."""
    try:
        if sys.platform.startswith("win"):
            base_env = os.environ.get("LOCALAPPDATA") or os.path.join(
                str(Path.home()), "AppData", "Local"
            )
            base = Path(base_env)
        else:
            base = Path.home()
        return base / ORGANIZATION
    except Exception:
        return Path.cwd() / ORGANIZATION


def setup_logging(level: Union[int, str] = logging.INFO, log_dir: Optional[Path] = None) -> Path:
    """Файл <app dir>/logs/app.log и stderr; возвращает путь к файлу журнала."""
    log_dir = log_dir or writable_app_dir() / "logs"
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = log_dir / "app.log"
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file, encoding="utf-8"))
    except OSError:
        log_file = Path(os.devnull)
    if isinstance(level, str):
        level = level.upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers)
    logging.getLogger().setLevel(level)
    return log_file


# ===================== РАЗБОР ЗНАЧЕНИЙ =====================


def _text(value: Any) -> str:
    # QSettings отдаёт "a, b" в INI как список строк
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _floats(key: str, text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from e


def _float(key: str, text: str) -> float:
    values = _floats(key, text)
    if len(values) != 1:
        raise ConfigError(f"{key}: expected one number, got {text!r}")
    return values[0]


def _int(key: str, text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        pass
    value = _float(key, text)
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(value)


def _ints(key: str, text: str) -> Tuple[int, ...]:
    values = _floats(key, text)
    if any(v != int(v) for v in values):
        raise ConfigError(f"{key}: expected integers, got {text!r}")
    return tuple(int(v) for v in values)


def _words(key: str, text: str) -> Tuple[str, ...]:
    return tuple(w.strip() for w in text.replace(";", ",").split(",") if w.strip())


def _bool(key: str, text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _pair(key: str, text: str) -> Tuple[float, float]:
    values = _floats(key, text)
    if len(values) != 2:
        raise ConfigError(f"{key}: expected 'low, high', got {text!r}")
    return values[0], values[1]


def _per_device(key: str, text: str) -> Union[float, Tuple[float, ...]]:
    values = _floats(key, text)
    return values[0] if len(values) == 1 else values


Parser = Callable[[str, str], Any]

SYSTEM_KEYS: Dict[str, Parser] = {
    "block_time_s": _float,
    "bandwidth_hz": _float,
    "noise_psd_w_per_hz": _float,
    "fog_cycles_per_s": _float,
    "fog_energy_per_bit_j": _float,
    "circuit_energy_j": _float,
    "conversion_eff": _per_device,
    "cap_coeff": _per_device,
    "cycles_per_bit": _per_device,
    "task_bits": _per_device,
    "sinr_target": _per_device,
    "pdd_theta": _float,
}
SYSTEM_SHAPE_KEYS = ("n_antennas", "n_eh", "n_id")
CHANNEL_KEYS: Dict[str, Parser] = {
    "eh_dist_range_m": _pair,
    "id_dist_range_m": _pair,
    "rician_k": _float,
    "pathloss_exp": _float,
    "reference_gain_at_1m": _float,
    "seed": _int,
    "reciprocal": _bool,
}
SOLVER_KEYS: Dict[str, Parser] = {
    "mu_factor": _float,
    "t0": _float,
    "newton_tol": _float,
    "feas_tol": _float,
    "gap_tol": _float,
    "gap_rel": _float,
    "max_newton": _int,
    "max_outer": _int,
}
EXPERIMENT_KEYS: Dict[str, Parser] = {
    "grid": _floats,
    "modes": _words,
    "designs": _words,
    "tu_fracs": _floats,
    "seeds": _ints,
    "jobs": _int,
}


# ===================== ЧТЕНИЕ =====================


def user_settings() -> QSettings:
    return QSettings(QSettings.IniFormat, QSettings.UserScope, ORGANIZATION, APPLICATION)


def user_settings_path() -> Path:
    return Path(user_settings().fileName())


def read_settings(settings: QSettings) -> RawConfig:
    """Все значения по группам, как строки."""
    raw: RawConfig = {}
    for group in settings.childGroups():
        settings.beginGroup(group)
        try:
            raw[str(group)] = {str(k): _text(settings.value(k)) for k in settings.childKeys()}
        finally:
            settings.endGroup()
    return raw


def read_ini(path: Union[str, Path]) -> RawConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    settings = QSettings(str(path), QSettings.IniFormat)
    if settings.status() != QSettings.NoError:
        raise ConfigError(f"cannot parse config file: {path}")
    return read_settings(settings)


def merge(*layers: Mapping[str, Mapping[str, str]]) -> RawConfig:
    out: RawConfig = {}
    for layer in layers:
        for group, values in layer.items():
            out.setdefault(group, {}).update(values)
    return out


def _parse_group(group: str, values: Mapping[str, str], keys: Mapping[str, Parser]) -> Dict[str, Any]:
    parsed: Dict[str, Any] = {}
    for key, text in values.items():
        if key not in keys:
            logger.warning("config: неизвестный ключ [%s] %s игнорируется", group, key)
            continue
        parsed[key] = keys[key](f"[{group}] {key}", text)
    return parsed


def build_params(values: Mapping[str, str]) -> SystemParams:
    shape = {k: _int(f"[system] {k}", values[k]) for k in SYSTEM_SHAPE_KEYS if k in values}
    rest = {k: v for k, v in values.items() if k not in SYSTEM_SHAPE_KEYS}
    db = rest.pop("sinr_target_db", None)
    parsed = _parse_group("system", rest, SYSTEM_KEYS)
    if db is not None:
        if "sinr_target" in parsed:
            raise ConfigError("[system] give either sinr_target or sinr_target_db, not both")
        gains = tuple(10.0 ** (v / 10.0) for v in _floats("[system] sinr_target_db", db))
        parsed["sinr_target"] = gains[0] if len(gains) == 1 else gains
    base = SystemParams.defaults(**shape)
    if "block_time_s" in parsed and "circuit_energy_j" not in parsed:
        base = base.with_block_time(parsed.pop("block_time_s"))
    try:
        return replace(base, **parsed)
    except ModelError as e:
        raise ConfigError(f"[system] {e}") from e


def build_channel(values: Mapping[str, str]) -> ChannelConfig:
    try:
        return ChannelConfig(**_parse_group("channel", values, CHANNEL_KEYS))
    except ChannelError as e:
        raise ConfigError(f"[channel] {e}") from e


def build_settings(values: Mapping[str, str]) -> IpmSettings:
    try:
        return IpmSettings(**_parse_group("solver", values, SOLVER_KEYS))
    except ProgramError as e:
        raise ConfigError(f"[solver] {e}") from e


@dataclass(frozen=True)
class AppConfig:
    params: SystemParams = field(default_factory=SystemParams.defaults)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    settings: IpmSettings = field(default_factory=IpmSettings)
    experiment: Dict[str, Any] = field(default_factory=dict)
    sources: Tuple[str, ...] = ()


def load_config(path: Optional[Union[str, Path]] = None, use_user: bool = True) -> AppConfig:
    """Собирает конфигурацию из файла пользователя и файла path."""
    layers: List[RawConfig] = []
    sources: List[str] = []
    if use_user:
        user_path = user_settings_path()
        if user_path.is_file():
            layers.append(read_settings(user_settings()))
            sources.append(str(user_path))
    if path is not None:
        layers.append(read_ini(path))
        sources.append(str(path))
    raw = merge(*layers)
    for group in raw:
        if group not in GROUPS:
            logger.warning("config: неизвестная группа [%s] игнорируется", group)
    return AppConfig(
        params=build_params(raw.get("system", {})),
        channel=build_channel(raw.get("channel", {})),
        settings=build_settings(raw.get("solver", {})),
        experiment=_parse_group("experiment", raw.get("experiment", {}), EXPERIMENT_KEYS),
        sources=tuple(sources),
    )


def effective_values(cfg: AppConfig) -> List[Tuple[str, str]]:
    """Пары "группа/ключ" → значение для вывода."""
    out: List[Tuple[str, str]] = []
    for group, obj in (("system", cfg.params), ("channel", cfg.channel), ("solver", cfg.settings)):
        for f in fields(obj):
            out.append((f"{group}/{f.name}", str(getattr(obj, f.name))))
    for key, value in sorted(cfg.experiment.items()):
        out.append((f"experiment/{key}", str(value)))
    return out


__all__ = [
    "ORGANIZATION",
    "APPLICATION",
    "ConfigError",
    "writable_app_dir",
    "setup_logging",
    "user_settings",
    "user_settings_path",
    "read_settings",
    "read_ini",
    "merge",
    "build_params",
    "build_channel",
    "build_settings",
    "AppConfig",
    "load_config",
    "effective_values",
]
