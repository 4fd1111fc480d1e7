"""Command line entry point.

    weakqubit run CONFIG [--output-dir DIR] [--seed N]
    weakqubit sweep CONFIG --param NAME --values V1,V2,... [--analytic] [--threads N]

Exit codes: 0 completed, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import yaml

from .config import ConfigError, load_config, parse_config
from .pipeline import NumericalFailure, run_experiment, run_sweep, summary_lines

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def bundled_config(name: str) -> Path:
    """Path of a reference config shipped with the package."""
    return Path(str(resources.files("weakqubit") / "configs" / name))


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and (bundled_config(p.name)).exists():
        return bundled_config(p.name)
    return p


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weakqubit", description="Simulate and analyse weak continuous measurement of a qubit.",
                                 epilog="Exit codes: 0 completed, 2 configuration error, 3 numerical failure.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML config (or the name of a bundled one)")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")

    common(sub.add_parser("run", help="run one experiment"))
    sw = sub.add_parser("sweep", help="repeat an experiment over parameter values")
    common(sw)
    sw.add_argument("--param", required=True,
                    choices=["gamma", "tau", "window_delta", "phase_diffusion"])
    sw.add_argument("--values", required=True, help="comma separated values")
    sw.add_argument("--analytic", action="store_true",
                    help="only evaluate the analytic margins (no simulation)")
    sub.add_parser("list-configs", help="show the bundled reference configs")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-configs":
        for p in sorted(bundled_config("").iterdir()):
            print(p.name)
        return EXIT_OK
    try:
        path = _resolve(args.config)
        if args.command == "run":
            cfg = load_config(path, seed=args.seed, output_dir=args.output_dir)
            report = run_experiment(cfg)
            print("\n".join(summary_lines(cfg, report["results"])))
            print(f"artifacts written to {cfg.output_dir}")
        else:
            try:
                raw = yaml.safe_load(path.read_text())
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}")
            if args.seed is not None:
                raw["seed"] = args.seed
            if args.output_dir is not None:
                raw["output_dir"] = args.output_dir
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"--values must be numbers, got {args.values!r}")
            out = parse_config(raw).output_dir
            rows = run_sweep(raw, args.param, values, args.threads, args.analytic, out)
            cols = ("value", "lg_lhs", "lg_margin", "analytic_margin", "peak_area")
            print(",".join(cols))
            for r in rows:
                print(",".join(f"{r[c]:.6g}" for c in cols))
            print(f"table written to {out / ('sweep_' + args.param + '.csv')}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK
