"""main.py

Командная строка SwiptFog.

    python main.py fot --seed 3 --tu-frac 0.8 --mode partial
    python main.py sweep-gamma --seeds 0,1,2 --jobs 4 --out results.csv
    python main.py convergence --seeds 0 --out trace.csv

Коды выхода: 0, все ячейки сошлись (или задан --allow-infeasible);
1, есть несошедшиеся ячейки; 2, ошибка аргументов или конфигурации.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from config import AppConfig, ConfigError, load_config, setup_logging
from experiments import (
    PARAM_NAMES,
    CellJob,
    ExperimentError,
    ExperimentSpec,
    ResultRow,
    run_cell,
    run_convergence,
    run_gamma_sweep,
    run_task_sweep,
    run_time_sweep,
    run_timing,
    summarize,
)
from export import render_results, write_output
from programs import FOT_MODES

logger = logging.getLogger(__name__)

SWEEPS = {
    "sweep-gamma": ("gamma_sweep", run_gamma_sweep),
    "sweep-task": ("task_sweep", run_task_sweep),
    "sweep-time": ("time_sweep", run_time_sweep),
    "timing": ("timing", run_timing),
}

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_USAGE = 2


def _list(cast: Any) -> Any:
    def parse(text: str) -> List[Any]:
        try:
            return [cast(v.strip()) for v in text.split(",") if v.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {e}") from e

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-файл конфигурации")
    common.add_argument("--no-user-config", action="store_true", help="не читать файл пользователя")
    common.add_argument("--seed", type=int, help="один seed каналов")
    common.add_argument("--seeds", type=_list(int), help="список seed через запятую")
    common.add_argument("--tu-frac", type=_list(float), help="t_u/T для FOT (список)")
    common.add_argument("--out", help="файл результатов (.csv или .xlsx)")
    common.add_argument("--jobs", type=int, help="число процессов")
    common.add_argument("--allow-infeasible", action="store_true")
    common.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )

    parser = argparse.ArgumentParser(
        prog="swiptfog", description="Энергоэффективные дизайны SWIPT fog computing"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fot = sub.add_parser("fot", parents=[common], help="одна задача FOT")
    fot.add_argument("--mode", choices=FOT_MODES, default="partial")
    fot.add_argument("--dual", action="store_true", help="двойственный путь (замкнутые формулы)")
    sub.add_parser("oot", parents=[common], help="одна задача OOT (PDD)")

    for name in SWEEPS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--grid", type=_list(float), help="значения параметра сетки")
        p.add_argument("--modes", type=_list(str), help=f"подмножество {FOT_MODES}")
        p.add_argument("--designs", type=_list(str), help="подмножество fot,oot")
    conv = sub.add_parser("convergence", parents=[common], help="трасса PDD")
    conv.add_argument("--grid", type=_list(float), help="γ, дБ")
    return parser


def _seeds(args: argparse.Namespace, cfg: AppConfig) -> List[int]:
    if args.seeds:
        return list(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return list(cfg.experiment.get("seeds", (cfg.channel.seed,)))


def _spec(kind: str, args: argparse.Namespace, cfg: AppConfig) -> ExperimentSpec:
    exp: Dict[str, Any] = dict(cfg.experiment)
    overrides = {
        "grid": getattr(args, "grid", None),
        "modes": getattr(args, "modes", None),
        "designs": getattr(args, "designs", None),
        "tu_fracs": args.tu_frac,
        "jobs": args.jobs,
    }
    exp.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(
        kind=kind,
        grid=tuple(exp.get("grid", ())),
        modes=tuple(exp.get("modes", FOT_MODES)),
        designs=tuple(exp.get("designs", ("fot",))),
        tu_fracs=tuple(exp.get("tu_fracs", ())),
        seeds=tuple(_seeds(args, cfg)),
        params=cfg.params,
        channel=cfg.channel,
        settings=cfg.settings,
        jobs=int(exp.get("jobs", 1)),
    )


def _single(args: argparse.Namespace, cfg: AppConfig) -> List[ResultRow]:
    fracs = args.tu_frac or list(cfg.experiment.get("tu_fracs", (0.8,)))
    if len(fracs) != 1 or not 0.0 < fracs[0] < 1.0:
        raise ExperimentError("single solve needs exactly one --tu-frac in (0, 1)")
    if args.command == "oot":
        design, mode, label = "oot", "partial", "oot"
    elif args.dual:
        design, mode, label = "fot_dual", "partial", "fot_dual"
    else:
        design, mode, label = "fot", args.mode, "fot"
    rows = []
    for seed in _seeds(args, cfg):
        job = CellJob(
            seed, PARAM_NAMES["single"], fracs[0], mode, design, label,
            cfg.params, cfg.channel, cfg.settings, fracs[0],
        )
        rows.append(run_cell(job))
    return rows


def _emit(rows: Sequence[ResultRow], out: Optional[str], trace: Optional[Sequence[Any]] = None) -> None:
    if out:
        write_output(rows, out, trace)
    else:
        sys.stdout.write(render_results(rows))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = load_config(args.config, use_user=not args.no_user_config)
        if cfg.sources:
            logger.info("конфигурация: %s", ", ".join(cfg.sources))
        trace = None
        if args.command in ("fot", "oot"):
            rows = _single(args, cfg)
        elif args.command == "convergence":
            result = run_convergence(_spec("convergence", args, cfg))
            rows, trace = result.rows, result.trace
        else:
            kind, runner = SWEEPS[args.command]
            rows = runner(_spec(kind, args, cfg))
    except (ConfigError, ExperimentError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    _emit(rows, args.out, trace)
    summary = summarize(rows)
    logger.info(
        "готово: %d строк, сошлось %d, max rank ratio %.3e",
        summary["rows"],
        summary["converged"],
        summary["max_rank_ratio"],
    )
    if summary["failed"] and not args.allow_infeasible:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
