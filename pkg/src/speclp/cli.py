"""Command line entry point: ``speclp run | recipe | list-recipes``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import DEFAULT
from .recipes import RECIPE_NOTES, recipe, recipe_names
from .runner import ConfigError, RunConfig, load_config, run


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("SPECLP_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError("SPECLP_THREADS must be an integer") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def _execute(cfg: RunConfig, args) -> int:
    if args.grid_scale is not None:
        if args.grid_scale <= 0:
            raise ConfigError("--grid-scale must be positive")
        cfg = replace(cfg, grid_scale=cfg.grid_scale * args.grid_scale)
    n = _threads(args)
    out = Path(args.out) if args.out else Path("speclp-out") / cfg.name
    with threadpool_limits(limits=n):
        res = run(cfg, out, replace(DEFAULT, threads=n))
    for task, r in res.report["tasks"].items():
        mark = "ok" if r.get("expectation_met") else ("ERROR" if r["verdict"] == "ERROR" else "FAIL")
        print(f"{task:12s} {r['verdict']:16s} {mark}")
    print(f"report: {out / 'report.json'}  status: {res.report['status']}")
    if res.report["status"] == "ERROR":
        print(res.report["tasks"][res.failed[-1]]["error"], file=sys.stderr)
    elif res.failed:
        print(f"failing task(s): {', '.join(res.failed)}", file=sys.stderr)
    return res.exit_code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="speclp", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default speclp-out/<name>)")
    common.add_argument("--threads", type=int, help="BLAS thread limit (default $SPECLP_THREADS or 1)")
    common.add_argument("--grid-scale", type=float, help="multiply every grid spacing by this factor")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", parents=[common], help="run a config file (INI or JSON)")
    r.add_argument("config")
    c = sub.add_parser("recipe", parents=[common], help="run a canned recipe, or print it with --emit")
    c.add_argument("tag")
    c.add_argument("--emit", action="store_true", help="print the recipe config instead of running it")
    sub.add_parser("list-recipes", help="list recipe tags")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "list-recipes":
            for tag in recipe_names():
                print(f"{tag:16s} {RECIPE_NOTES[tag]}")
            return 0
        if args.cmd == "recipe":
            cfg = recipe(args.tag)
            if args.emit:
                sys.stdout.write(cfg.to_ini())
                return 0
            return _execute(cfg, args)
        return _execute(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
