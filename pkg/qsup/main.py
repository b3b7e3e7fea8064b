"""
Command-line entry point.

    python -m qsup.main simulate   [--config PATH] [--seed N] [--out DIR] [--format csv|json] [--workers N] [--save-counts]
    python -m qsup.main analytic   [--config PATH] [--out DIR] [--format csv|json]
    python -m qsup.main tomo       --counts CSV --target-deg DEG [--out DIR] [--format csv|json]
    python -m qsup.main verify     [--config PATH] [--seed N] [--out DIR] [--workers N]
    python -m qsup.main zeno-limit [--config PATH] [--out DIR] [--format csv|json]
"""
from typing import List, Optional
import argparse
import math
import os
import sys

from loguru import logger

from .acceptance import report_summary, run_acceptance
from .config import CONFIG_PATH, ConfigError, apply_overrides, load_config, save_config
from .harness import (
    SweepCellError, analytic_report, run_sweep, write_figure_table, write_table, write_zeno_table, zeno_limit_study,
)
from .qstate import basis_ket
from .schemas import RunSummary, SweepSpec
from .tomography import group_by_acquisition, loss_rate, mle_reconstruct, read_counts_csv, summarize

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3

SUMMARY_COLUMNS = list(RunSummary.model_fields)


def configure_logging(level: str = "INFO") -> None:
    """stderr at the requested level plus a rotating file sink"""
    logger.remove()
    logger.add(sys.stderr, level=level)
    log_path = os.path.join("logs", "qsup.log")
    os.makedirs(os.path.dirname(log_path), exist_ok=True)
    logger.add(log_path, rotation="1 MB", retention="30 days", level="INFO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsup",
        description="Decoherence, Zeno protection and shot-noise tomography of a polarization qubit",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, fmt: bool = True):
        sub.add_argument("--config", default=CONFIG_PATH, help="Flat JSON sweep configuration")
        sub.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
        if fmt:
            sub.add_argument("--format", choices=["csv", "json"], default="csv")

    simulate = commands.add_parser("simulate", help="Monte Carlo sweep with tomography")
    add_common(simulate)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--workers", type=int, default=None)
    simulate.add_argument("--save-counts", action="store_true", help="Also write the raw count records per series")

    analytic = commands.add_parser("analytic", help="Closed-form table, no shot noise")
    add_common(analytic)

    tomo = commands.add_parser("tomo", help="Reconstruct and summarize a counts CSV")
    tomo.add_argument("--counts", required=True, help="CSV with columns k,repetition,basis,counts,monitor")
    tomo.add_argument("--target-deg", type=float, required=True, help="Input state angle the fidelity refers to")
    tomo.add_argument("--out", default="results")
    tomo.add_argument("--format", choices=["csv", "json"], default="csv")

    verify = commands.add_parser("verify", help="Run the acceptance suite")
    add_common(verify, fmt=False)
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--workers", type=int, default=None)

    zeno = commands.add_parser("zeno-limit", help="Survival versus projection count at fixed total walk-off")
    add_common(zeno)
    return parser


def _load(args) -> SweepSpec:
    spec = load_config(args.config)
    return apply_overrides(
        spec,
        seed=getattr(args, "seed", None),
        output_dir=args.out,
        workers=getattr(args, "workers", None),
    )


def cmd_simulate(args) -> int:
    spec = _load(args)
    counts_dir = spec.output_dir if args.save_counts else None
    table = run_sweep(spec, counts_dir=counts_dir)
    write_figure_table(table, spec.output_dir, fmt=args.format)
    save_config(spec, spec.output_dir)
    return EXIT_OK


def cmd_analytic(args) -> int:
    spec = _load(args)
    write_figure_table(analytic_report(spec), spec.output_dir, stem="analytic_table", fmt=args.format)
    return EXIT_OK


def cmd_tomo(args) -> int:
    try:
        records = read_counts_csv(args.counts)
    except (OSError, ValueError) as e:
        logger.error(f"Cannot read counts: {str(e)}")
        return EXIT_CONFIG
    grouped = group_by_acquisition(records)
    if 0 not in grouped:
        logger.error(f"{args.counts} has no k=0 acquisitions to normalize the loss estimate")
        return EXIT_CONFIG
    target = basis_ket(math.radians(args.target_deg))
    reference_loss = loss_rate(r for reps in grouped[0].values() for r in reps)
    summaries = []
    try:
        for k, acquisitions in grouped.items():
            results = [mle_reconstruct(acquisitions[rep]) for rep in sorted(acquisitions)]
            k_records = [r for rep in sorted(acquisitions) for r in acquisitions[rep]]
            summaries.append(summarize(results, target, k_records, reference_loss))
    except ValueError as e:
        logger.error(f"Incomplete counts in {args.counts}: {str(e)}")
        return EXIT_CONFIG
    write_table(summaries, SUMMARY_COLUMNS, args.out, "tomography_summary", args.format)
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = _load(args)
    report = run_acceptance(spec)
    os.makedirs(spec.output_dir, exist_ok=True)
    path = os.path.join(spec.output_dir, "acceptance_report.json")
    with open(path, "w") as f:
        f.write(report.model_dump_json(indent=2))
    logger.info(f"Acceptance report written to {path}: {report_summary(report)}")
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


def cmd_zeno_limit(args) -> int:
    spec = _load(args)
    write_zeno_table(zeno_limit_study(spec), spec.output_dir, fmt=args.format)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "tomo": cmd_tomo,
    "verify": cmd_verify,
    "zeno-limit": cmd_zeno_limit,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    except SweepCellError as e:
        logger.error(str(e))
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"{args.command} failed: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
