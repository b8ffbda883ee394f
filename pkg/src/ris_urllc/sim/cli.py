"""Command-line sweep: ``ris-urllc --bits 100:900:200 --trials 50 --out res.csv``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from ..config import SCHEMES, ConfigError, SystemConfig, dump_config, load_config, parse_bits
from .experiment import emit_csv, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ALL_FAILED = 0, 1, 2, 3

log = logging.getLogger("ris_urllc")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is our I/O code
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ris-urllc", description="Monte-Carlo sweep of the two-stage relay protocol.")
    p.add_argument("--config", type=Path, help="key = value file; flags below override it")
    p.add_argument("--scheme", choices=SCHEMES + ("all",))
    p.add_argument("--bits", help="list (100,300) or inclusive range (100:900:100)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("results.csv"))
    p.add_argument("--workers", type=int)
    p.add_argument("--fixed-geometry", action="store_true", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = {}
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    if args.bits is not None:
        changes["bits"] = parse_bits(args.bits)
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        changes["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1")
        changes["workers"] = args.workers
    if args.fixed_geometry:
        changes["fixed_geometry"] = True
    cfg = cfg.replace(**changes)
    if not cfg.bits:
        raise ConfigError("empty bit list")
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    log_path = out.with_name(out.name + ".log")

    def progress(done, total):
        log.info("%d/%d optimizations done", done, total)

    # fail before a long sweep rather than after it
    if not out.parent.is_dir() or out.is_dir():
        print(f"I/O error: cannot write CSV to {out}", file=sys.stderr)
        return EXIT_IO

    t0 = time.perf_counter()
    report = run_sweep(cfg, progress=progress)
    wall = time.perf_counter() - t0

    lines = ["# config", dump_config(cfg).rstrip("\n"), "",
             f"wall_time_s = {wall:.3f}",
             f"solver_anomalies = {len(report.failures)}",
             f"sca_unconverged = {report.unconverged}"]
    for (D, use_ris), secs in sorted(report.wall_time.items()):
        lines.append(f"sweep D={D} ris={'on' if use_ris else 'off'}: wall_time_s={secs:.3f}")
    for r in report.results:
        lines.append(f"rows {r.scheme} D={r.D}: trials={r.trials} failed={r.failed}")
    for s, D, t, msg in report.failures:
        lines.append(f"anomaly {s} D={D} trial={t}: {msg}")
    try:
        emit_csv(report.results, out)
        log_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    if all(r.trials == 0 for r in report.results):
        print("every trial failed", file=sys.stderr)
        return EXIT_ALL_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
