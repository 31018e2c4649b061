"""
Command-line interface of the benchmark harness.

Subcommands ``model-quality`` and ``smbo`` run a study and write a results
CSV, ``analyze`` ranks the kernels of a results file and ``slices`` writes
the example-fit table of one test instance.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from app import __version__
from app.core.config import settings
from app.core.exceptions import ConfigurationException, HierKrigException, StatisticsException
from app.core.logging import get_logger, setup_logging
from app.models.schemas import (
    SCOPES,
    FitConfig,
    KernelKind,
    RunConfig,
    SmboConfig,
    StudyKind,
    TestFunctionSpec,
)
from app.services import bench, statistics
from app.utils.helpers import parse_bool, parse_list

logger = get_logger("cli")

RUN_KEYS = (
    "kernels", "reps", "seed", "budget", "init", "grid_b", "grid_c", "grid_d",
    "out", "workers", "scope", "design", "timings",
)
FILE_KEYS = RUN_KEYS + ("study", "paper_scale")


def read_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """
    Read a flat ``KEY=value`` run configuration file.

    Keys are case-insensitive and may use ``-`` or ``_``.

    Raises:
        ConfigurationException: If the file is missing or has unknown keys
    """
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigurationException(f"Configuration file not found: {path}")

    values: Dict[str, Any] = {}
    for key, value in dotenv_values(path).items():
        name = key.strip().lower().replace("-", "_")
        if name not in FILE_KEYS:
            raise ConfigurationException(f"Unknown configuration key '{key}' in {path}")
        if value is None:
            raise ConfigurationException(f"Configuration key '{key}' in {path} has no value")
        values[name] = value
    return values


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ()))
        parts.append(f"{location}: {item['msg']}" if location else item["msg"])
    return "; ".join(parts)


def load_run_config(args: argparse.Namespace, study: Optional[StudyKind] = None) -> RunConfig:
    """
    Merge settings defaults, the configuration file and command-line flags.

    Flags win over file values, file values win over settings.

    Raises:
        ConfigurationException: For unknown keys or invalid values
    """
    merged: Dict[str, Any] = {
        "reps": settings.reps,
        "seed": settings.seed,
        "budget": settings.smbo_budget,
        "init": settings.smbo_init,
        "workers": settings.workers,
        "timings": settings.record_timings,
    }
    file_values = read_config_file(getattr(args, "config", None))
    try:
        paper_scale = parse_bool(file_values.pop("paper_scale", False))
        if "timings" in file_values:
            file_values["timings"] = parse_bool(file_values["timings"])
    except ValueError as e:
        raise ConfigurationException(str(e))
    file_values.pop("study", None)
    merged.update(file_values)

    if paper_scale or getattr(args, "paper_scale", False):
        merged["reps"] = settings.paper_reps
    for key in RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if study is not None:
        merged["study"] = study

    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigurationException(f"Invalid configuration: {_validation_message(e)}")


def _default_results_path(study: StudyKind) -> Path:
    return Path(f"results_{study.value}.csv")


def cmd_model_quality(args: argparse.Namespace) -> int:
    """Run the model-quality study and write its results CSV."""
    config = load_run_config(args, StudyKind.MODEL_QUALITY)
    records = bench.run_model_quality(
        grid=config.grid(),
        kernels=config.kernels,
        reps=config.reps,
        master_seed=config.seed,
        workers=config.workers,
        fit=FitConfig(),
        record_timings=config.timings,
    )
    path = bench.write_records(records, config.out or _default_results_path(StudyKind.MODEL_QUALITY))
    print(f"{len(records)} records written to {path}")
    return 0


def cmd_smbo(args: argparse.Namespace) -> int:
    """Run the optimization study and write its results CSV."""
    config = load_run_config(args, StudyKind.SMBO)
    try:
        smbo = SmboConfig(init_size=config.init, total_budget=config.budget, design=config.design)
    except ValidationError as e:
        raise ConfigurationException(f"Invalid configuration: {_validation_message(e)}")
    records = bench.run_smbo_study(
        grid=config.grid(),
        kernels=config.kernels,
        reps=config.reps,
        master_seed=config.seed,
        workers=config.workers,
        smbo=smbo,
        record_timings=config.timings,
    )
    path = bench.write_records(records, config.out or _default_results_path(StudyKind.SMBO))
    print(f"{len(records)} records written to {path}")
    return 0


def _analysis_scope(args: argparse.Namespace) -> List[str]:
    scope = args.scope
    if scope is None:
        scope = read_config_file(getattr(args, "config", None)).get("scope", "all")
    scope = scope.strip()
    if scope.lower() == "all":
        return list(SCOPES)
    if scope.lower() == "overall":
        return ["overall"]
    if scope.upper() in SCOPES:
        return [scope.upper()]
    raise ConfigurationException(f"Unknown scope '{scope}' (expected all, {', '.join(SCOPES)})")


def cmd_analyze(args: argparse.Namespace) -> int:
    """
    Rank the kernels of a results file per scope.

    Writes ``ranks.csv`` (mean rank per scope and kernel), ``edges.txt``
    (Friedman result and Nemenyi edges per scope), ``graph_<scope>.dot`` and,
    for model-quality results, ``median_rmse.csv``.
    """
    scopes = _analysis_scope(args)
    frame = bench.read_records(Path(args.results))
    out_dir = Path(args.out) if args.out else Path("analysis")
    out_dir.mkdir(parents=True, exist_ok=True)

    rank_rows = []
    edge_lines = []
    for scope in scopes:
        try:
            table = statistics.build_rank_table(frame, scope)
            friedman = statistics.friedman_test(table)
        except StatisticsException as e:
            if len(scopes) == 1:
                raise
            logger.warning(f"Skipping scope {scope}: {e.message}")
            continue

        ranks = statistics.mean_ranks(table)
        nemenyi = statistics.nemenyi_posthoc(table)
        edges = statistics.significance_edges(nemenyi, reduce=args.reduce)
        logger.info(
            f"Scope {scope}: {table.n_blocks} blocks, Friedman statistic "
            f"{friedman.statistic:.6g}, p={friedman.p_value:.6g}"
        )

        for kernel, value in ranks.items():
            rank_rows.append({"scope": scope, "kernel": kernel, "mean_rank": value, "blocks": table.n_blocks})
        edge_lines.append(
            f"# scope={scope} blocks={table.n_blocks} "
            f"friedman statistic={friedman.statistic:.6g} p={friedman.p_value:.6g}"
        )
        edge_lines.extend(statistics.format_edges(edges))
        (out_dir / f"graph_{scope}.dot").write_text(statistics.to_dot(ranks, edges, name=scope))

        print(f"[{scope}] " + ", ".join(f"{kernel} {value:.2f}" for kernel, value in ranks.items()))

    if not rank_rows:
        raise StatisticsException(f"No scope of {args.results} could be analyzed")

    pd.DataFrame(rank_rows).to_csv(out_dir / "ranks.csv", index=False, lineterminator="\n")
    (out_dir / "edges.txt").write_text("\n".join(edge_lines) + "\n")

    if (frame["study"] == StudyKind.MODEL_QUALITY.value).all():
        bench.summarize_model_quality(frame).to_csv(out_dir / "median_rmse.csv", lineterminator="\n")

    logger.info(f"Analysis written to {out_dir}")
    return 0


def cmd_slices(args: argparse.Namespace) -> int:
    """Write the example-fit table of one test instance."""
    try:
        spec = TestFunctionSpec(b=args.b, c=args.c, d=args.d)
        kernels = [KernelKind.parse(name) for name in parse_list(args.kernels)] if args.kernels else list(KernelKind)
        x2_values = [float(value) for value in parse_list(args.x2)]
    except (ValidationError, ValueError) as e:
        raise ConfigurationException(f"Invalid configuration: {e}")

    table = bench.model_slices(spec, kernels, seed=args.seed, x2_values=x2_values, points=args.points)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, lineterminator="\n")
    print(f"{len(table)} slice rows written to {out}")
    return 0


def _add_study_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernels", help="Comma-separated kernels (stan, arc, ico, icocor, imp, imparc)")
    parser.add_argument("--reps", type=int, help=f"Replications per grid cell (default {settings.reps})")
    parser.add_argument("--paper-scale", action="store_true", default=None,
                        help=f"Run {settings.paper_reps} replications")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--budget", type=int, help="Objective evaluations per optimization run")
    parser.add_argument("--init", type=int, help="Initial design size of optimization runs")
    parser.add_argument("--grid-b", help="Comma-separated values of b")
    parser.add_argument("--grid-c", help="Comma-separated values of c")
    parser.add_argument("--grid-d", help="Comma-separated values of d")
    parser.add_argument("--out", type=Path, help="Results CSV path")
    parser.add_argument("--workers", type=int, help="Worker processes")
    parser.add_argument("--design", choices=["uniform", "lhs"], help="Initial design of optimization runs")
    parser.add_argument("--timings", action="store_true", default=None,
                        help="Record wall times (results are then not byte-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with all subcommands."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="KEY=value run configuration file")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        type=str.upper, help="Override the configured log level")

    parser = argparse.ArgumentParser(
        prog="bench",
        description=settings.app_description,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    model_quality = subparsers.add_parser("model-quality", parents=[common],
                                          help="Measure model RMSE per kernel")
    _add_study_arguments(model_quality)
    model_quality.set_defaults(handler=cmd_model_quality)

    smbo = subparsers.add_parser("smbo", parents=[common], help="Measure optimization suboptimality per kernel")
    _add_study_arguments(smbo)
    smbo.set_defaults(handler=cmd_smbo)

    analyze = subparsers.add_parser("analyze", parents=[common], help="Rank kernels of a results file")
    analyze.add_argument("results", type=Path, help="Results CSV")
    analyze.add_argument("--scope", help="all, overall or a situation A..E (default all)")
    analyze.add_argument("--out", type=Path, help="Output directory (default ./analysis)")
    analyze.add_argument("--reduce", action="store_true", help="Emit the transitive reduction of the edges")
    analyze.set_defaults(handler=cmd_analyze)

    slices = subparsers.add_parser("slices", parents=[common], help="Tabulate example fits along x1")
    slices.add_argument("--b", type=float, default=0.1)
    slices.add_argument("--c", type=float, default=0.4)
    slices.add_argument("--d", type=float, default=0.7)
    slices.add_argument("--kernels", help="Comma-separated kernels (default all)")
    slices.add_argument("--seed", type=int, default=settings.seed)
    slices.add_argument("--x2", default="0.5,0.75", help="Comma-separated x2 slice values")
    slices.add_argument("--points", type=int, default=101)
    slices.add_argument("--out", default="slices.csv", help="Output CSV path")
    slices.set_defaults(handler=cmd_slices)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point. Returns the process exit code.

    Usage errors exit 2 through argparse; any library error is reported on
    stderr and also exits 2.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    try:
        return args.handler(args)
    except HierKrigException as e:
        logger.error(f"{e.message}" + (f" ({e.detail})" if e.detail else ""))
        print(f"error: {e.message}", file=sys.stderr)
        return 2
