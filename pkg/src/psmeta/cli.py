"""Command-line front end: ``psmeta {preset,run,validate,maps}``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, parse_config
from .envs import SHIPPED_PATHS, EnvError, resolve_map, shipped_map
from .experiments import PRESETS, PresetError, auto_workers, preset_configs, run_to_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (default: $PSMETA_OUT or ./results)")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--workers", type=int, default=1, help="parallel agents; 0 = one per CPU")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psmeta", description="Meta-learning projective simulation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preset", help="run a figure preset and write its CSV files")
    p.add_argument("name", help=f"one of {', '.join(PRESETS)} (optionally with ':desk')")
    p.add_argument("--desk", action="store_true", help="use the scaled-down variant")
    _common(p)

    p = sub.add_parser("run", help="run an ensemble described by a config file")
    p.add_argument("--config", required=True, help="flat 'key = value' config file")
    _common(p)

    p = sub.add_parser("validate", help="run the acceptance checks")
    p.add_argument("--only", help="comma-separated criterion numbers (default: all)")
    p.add_argument("--workers", type=int, default=1, help="parallel agents; 0 = one per CPU")

    sub.add_parser("maps", help="print the shipped maps with shortest-path lengths")
    return parser


def _out_dir(arg: Optional[str]) -> Path:
    out = Path(arg or os.environ.get("PSMETA_OUT") or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(n: int) -> int:
    if n < 0:
        raise ValueError("--workers must be >= 0")
    return auto_workers() if n == 0 else n


def _cmd_preset(args) -> int:
    name = args.name
    if args.desk and not name.endswith(":desk"):
        name += ":desk"
    try:
        configs = preset_configs(name)
    except PresetError as exc:
        print(f"psmeta: {exc.args[0]}", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    for cfg in configs.values():
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        run_to_csv(cfg, out, _workers(args.workers))
        print(out / f"{cfg.name}.csv")
    return 0


def _cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"psmeta: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if cfg.env == "grid":
            for m in cfg.maps():
                resolve_map(m)
    except (ConfigError, EnvError, OSError) as exc:
        print(f"psmeta: {args.config}: {exc}", file=sys.stderr)
        return 1
    out = _out_dir(args.out)
    run_to_csv(cfg, out, _workers(args.workers))
    print(out / f"{cfg.name}.csv")
    return 0


def _cmd_validate(args) -> int:
    from .validation import CRITERIA, run_all

    only = None
    if args.only:
        try:
            only = [int(x) for x in args.only.split(",")]
        except ValueError:
            only = [-1]
        bad = [k for k in only if k not in CRITERIA]
        if bad:
            print(f"psmeta: unknown criterion {bad[0]}; choose from {sorted(CRITERIA)}", file=sys.stderr)
            return 2
    results = run_all(only, _workers(args.workers))
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


def _cmd_maps(args) -> int:
    for name in SHIPPED_PATHS:
        gmap = shipped_map(name)
        print(f"map ({name})")
        print(gmap.render(), end="")
        line = f"shortest_path={gmap.shortest_path(gmap.goal)}"
        if gmap.distractor is not None:
            line += f" distractor_path={gmap.shortest_path(gmap.distractor)}"
        print(line)
        print()
    return 0


COMMANDS = {"preset": _cmd_preset, "run": _cmd_run, "validate": _cmd_validate, "maps": _cmd_maps}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"psmeta: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
