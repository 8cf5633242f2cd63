from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from .catalog import benchmark_catalog, resolve_problem
from .config import Settings, get_settings
from .core_model import constants_of, reduce_stopping_time
from .engine import solve_bsde
from .ensemble import gen_brownian
from .errors import EXIT_OK, EXIT_VIOLATION, CertError, ConfigError
from .harness import run_certify, run_nle_stability, run_stability_sweep
from .models import ExperimentConfig
from .presets import load_experiment_file, load_preset
from .storage import dump_solution, emit_report

logger = logging.getLogger(__name__)


def _weight(value: str) -> Union[float, str]:
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--a expects a float or 'auto', got '{value}'") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment YAML file")
    parser.add_argument("--preset", type=str, help="experiment id under the experiments directory")
    parser.add_argument("--benchmark", type=str, help="benchmark or problem-section name")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--paths", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--q", type=float)
    parser.add_argument("--a", type=_weight, help="exponential weight or 'auto'")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--scan-a", action="store_true", default=None)
    parser.add_argument("--fixed-timestamp", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsde-cert", description="Certify BSDE a priori estimates by simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("certify", "run the a priori estimate certificates"),
        ("sweep", "run a stability sweep over a perturbation ladder"),
        ("nle", "run the nonlinear-expectation stability check"),
        ("dump-solution", "solve a benchmark and write the solution grid as CSV"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    sub.add_parser("bench-list", help="list catalog benchmarks with their declared constants")
    return parser


def experiment_from_args(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    command = args.command if args.command in ("certify", "sweep", "nle") else "certify"
    if args.config is not None:
        config = load_experiment_file(args.config)
    elif args.preset is not None:
        config = load_preset(settings, args.preset)
    else:
        if args.benchmark is None:
            raise ConfigError("Pass --config, --preset or --benchmark.")
        config = ExperimentConfig(
            id=f"{args.benchmark.lower()}_{command}",
            command=command,
            benchmark=args.benchmark,
            seed=settings.default_seed,
            workers=settings.workers,
        )
    updates: Dict[str, Any] = {"command": command}
    for field in ("benchmark", "seed", "paths", "steps", "q", "a", "workers"):
        value = getattr(args, field, None)
        if value is not None:
            updates[field] = value
    if args.scan_a:
        updates["scan_a"] = True
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **updates})
    except ValidationError as exc:
        errors = exc.errors()
        reason = errors[0].get("msg", str(exc)) if errors else str(exc)
        raise ConfigError(f"Invalid command-line override: {reason}") from exc


def _out_path(args: argparse.Namespace, settings: Settings, config: ExperimentConfig, suffix: str) -> Path:
    if args.out is not None:
        return args.out
    return settings.reports_dir / f"{config.id}_{config.command}.{suffix}"


def _run_experiment(args: argparse.Namespace, settings: Settings) -> int:
    config = experiment_from_args(args, settings)
    logger.info("Running %s on %s (seed=%d, paths=%d, steps=%d)", config.command, config.benchmark, config.seed, config.paths, config.steps)
    if config.command == "certify":
        reports: List[Any] = list(run_certify(config, settings))
    elif config.command == "sweep":
        reports = [run_stability_sweep(config, settings)]
    else:
        reports = [run_nle_stability(config, settings)]
    path = emit_report(
        reports,
        _out_path(args, settings, config, args.format),
        args.format,
        seed=config.seed,
        fixed_timestamp=args.fixed_timestamp,
    )
    print(f"wrote {len(reports)} report(s) to {path}")
    if any(getattr(report, "verdict", None) == "violated" for report in reports):
        return EXIT_VIOLATION
    return EXIT_OK


def _bench_list(args: argparse.Namespace, settings: Settings) -> int:
    header = f"{'name':<12} {'k':>2} {'d':>2} {'lambda':>7} {'mu':>6} {'gamma':>6} {'kappa':>6}  z-dep  stopping"
    print(header)
    for entry in benchmark_catalog():
        p = entry.problem
        c = constants_of(p.driver)
        stopping = p.stopping_time.label() if p.stopping_time else "-"
        print(
            f"{entry.name:<12} {p.k_dim:>2} {p.d_dim:>2} {c['lambda']:>7g} {c['mu']:>6g} "
            f"{c['gamma']:>6g} {c['kappa']:>6g}  {str(c['z_dependent']):<5}  {stopping}"
        )
    return EXIT_OK


def _dump_solution(args: argparse.Namespace, settings: Settings) -> int:
    config = experiment_from_args(args, settings)
    problem = resolve_problem(config.benchmark, config.problems, config.horizon_T)
    if problem.stopping_time is not None:
        problem = reduce_stopping_time(problem)
    ens = gen_brownian(config.seed, config.paths, config.steps, problem.horizon_T, problem.d_dim, max_cells=settings.max_cells)
    sol = solve_bsde(problem, ens, config.regression)
    path = args.out or settings.reports_dir / f"{config.benchmark.lower()}_solution.csv"
    dump_solution(sol, path)
    print(f"wrote solution grid to {path}")
    return EXIT_OK


HANDLERS = {
    "certify": _run_experiment,
    "sweep": _run_experiment,
    "nle": _run_experiment,
    "bench-list": _bench_list,
    "dump-solution": _dump_solution,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args, settings)
    except CertError as exc:
        logger.error("%s: %s", exc.error_code, exc.message)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
