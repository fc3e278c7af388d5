"""Command line entry point: ``parasig <subcommand> --config PATH --out DIR``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import ConfigError, load_config, run_experiment

SUBCOMMANDS = {
    "solve": "solve",
    "frequency": "frequency",
    "weiss-monneau": "weiss_monneau",
    "classify": "classify",
    "whitney": "whitney",
    "catalog-check": "catalog_check",
}

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _add_common(p: argparse.ArgumentParser, need_config: bool = True):
    p.add_argument("--config", type=Path, required=need_config, help="INI experiment config")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="numba worker threads")
    p.add_argument("--preset", choices=("coarse", "fine"), help="override the mesh size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parasig", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name, help=f"run a {SUBCOMMANDS[name]} experiment"))
    rp = sub.add_parser("reproduce-all", help="run every config in a directory")
    _add_common(rp, need_config=False)
    rp.add_argument("--configs", type=Path, default=CONFIG_DIR, help="directory of *.ini files")
    return ap


def _report(name: str, out: Path, outcome) -> None:
    status = "PASS" if outcome.passed else "FAIL"
    print(f"{status} {name} -> {out}")
    for c in outcome.checks:
        mark = "ok  " if c.passed else "FAIL"
        print(f"  {mark} {c.name}: value={c.value:.6g} tol={c.tol:.3g} {c.detail}".rstrip())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-all":
            paths = sorted(args.configs.glob("*.ini"))
            if not paths:
                print(f"no configs in {args.configs}", file=sys.stderr)
                return 2
            ok = True
            for path in paths:
                cfg = load_config(path, args.preset)
                out, outcome = run_experiment(cfg, args.out / cfg.name, args.threads)
                _report(cfg.name, out, outcome)
                ok &= outcome.passed
            return 0 if ok else 1
        cfg = load_config(args.config, args.preset)
        if cfg.kind != SUBCOMMANDS[args.command]:
            print(f"{args.config}: config kind is {cfg.kind!r}, not {SUBCOMMANDS[args.command]!r}", file=sys.stderr)
            return 2
        out, outcome = run_experiment(cfg, args.out, args.threads)
        _report(cfg.name, out, outcome)
        return 0 if outcome.passed else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
