"""``kh-bench`` command line.

Exit codes: 0 success, 1 configuration or usage error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..recycler import summarize
from .config import ConfigError, load_config
from .kh import KhRunFailure, StatsWriter, emit_outputs, read_stats, run_simulation, write_summary

log = logging.getLogger("kh-bench")


def _format_summary(row):
    return "\n".join(f"{k:>22s}  {v:.6g}" if isinstance(v, float) else f"{k:>22s}  {v}"
                     for k, v in row.as_dict().items())


def _run(args):
    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        n_steps = cfg.n_steps
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    log.info("running %d steps on %dx%d, variant %s", n_steps, cfg.Nx, cfg.Ny, cfg.precond_variant)

    def progress(s):
        log.info("step %d t=%.4f iters=%d%s", s.step, s.time, s.iterations,
                 " (factor)" if s.was_factor_step else "")

    writer = StatsWriter(os.path.join(cfg.output_dir, "stats.csv"))

    def on_step(s):
        writer(s)
        progress(s)

    try:
        stats, snaps, summary = run_simulation(cfg, on_step=on_step)
    except KhRunFailure as exc:
        print(f"solver failure at step {exc.step}: {exc}; system written to {exc.dump_dir}",
              file=sys.stderr)
        return 2
    finally:
        writer.close()
    emit_outputs(stats, snaps, summary, cfg.output_dir)
    print(_format_summary(summary))
    return 0


def _summarize(args):
    try:
        stats = read_stats(args.stats)
        row = summarize(stats)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot summarize {args.stats}: {exc}", file=sys.stderr)
        return 1
    if args.output:
        write_summary(args.output, row)
    print(_format_summary(row))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="kh-bench",
                                     description="Planar Kelvin-Helmholtz solver benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a simulation from a key=value config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir", default=None, help="overrides output_dir of the config")
    p_sum = sub.add_parser("summarize", help="aggregate a stats.csv file")
    p_sum.add_argument("--stats", required=True)
    p_sum.add_argument("--output", default=None, help="also write the row as CSV")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "run":
        return _run(args)
    return _summarize(args)


if __name__ == "__main__":
    sys.exit(main())
