"""Command line entry point: ``pegsim {analytic,run,sweep,psd} --config FILE``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import __version__
from .config import load_config, parse_config, render
from .errors import ConfigError
from .scenario import EXIT_CONFIG, EXIT_OK, JOBS, run_scenario


def build_parser():
    parser = argparse.ArgumentParser(prog="pegsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pegsim {__version__}")
    sub = parser.add_subparsers(dest="job", required=True)
    for kind in JOBS:
        p = sub.add_parser(kind, help=f"run a {kind} job")
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="random seed (overrides job.seed)")
        p.add_argument("--workers", type=int, help="sweep worker processes (overrides job.workers)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.job.kind != args.job:
            # re-validate: the subcommand may need fields the file's job did not
            cfg = parse_config(render(replace(cfg, job=replace(cfg.job, kind=args.job))))
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.workers is not None:
            cfg = cfg.with_workers(args.workers)
        if args.out is not None:
            cfg = cfg.with_output_dir(args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run_scenario(cfg)
    if status == EXIT_OK and not args.quiet:
        print(f"{args.job}: artifacts written to {os.path.abspath(cfg.output.directory)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
