"""Command-line interface.

    imbalance-lab <sweep|dim-scan|rho-scan|cdt-failure|implicit-bias|kernel>
                  --config <file> [--out <dir>] [--threads n]

Every command reads one JSON config, writes a long-format results CSV
(columns: method, param, seed, metric, value, analytic_value) and
self-contained SVG plots derived from that CSV. Re-running with the same
config is bit-identical. The default worker count comes from the
IMBALANCE_LAB_THREADS environment variable.

Exit codes: 0 success, 2 config error, 3 solver infeasibility, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .gd import DivergenceError
from .margin import CertificationError, InfeasibleProblemError
from .sweeps import (
    ConfigError,
    default_threads,
    parse_sweep_config,
    run_cdt_failure,
    run_dim_scan,
    run_implicit_bias,
    run_kernel,
    run_rho_scan,
    run_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _out_dir(args, cfg: dict) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(cfg.get("output_dir", "out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imbalance-lab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=(name != "cdt-failure"), help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker processes")
        return p

    add("sweep", "hyperparameter sweep: empirical vs analytic error curves")
    add("dim-scan", "worst-class error as a function of dimension")
    add("rho-scan", "error as a function of the bias coupling rho")
    add("implicit-bias", "gradient-descent direction convergence to margin solutions")
    add("kernel", "RBF-kernel classification on feature files")
    p = add("cdt-failure", "construct and audit a hard instance for CDT")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--classes", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else default_threads()
        if args.command == "cdt-failure":
            cfg = _load_config(args.config) if args.config else {}
            epsilon = args.epsilon if args.epsilon is not None else cfg.get("epsilon")
            classes = args.classes if args.classes is not None else cfg.get("c")
            if epsilon is None or classes is None:
                raise ConfigError("cdt-failure needs epsilon and class count")
            out = run_cdt_failure(float(epsilon), int(classes), _out_dir(args, cfg))
        else:
            cfg = _load_config(args.config)
            out_dir = _out_dir(args, cfg)
            if args.command == "sweep":
                out = run_sweep(parse_sweep_config(cfg), out_dir, threads)
            elif args.command == "dim-scan":
                out = run_dim_scan(cfg, out_dir, threads)
            elif args.command == "rho-scan":
                out = run_rho_scan(cfg, out_dir, threads)
            elif args.command == "implicit-bias":
                out = run_implicit_bias(cfg, out_dir, threads)
            elif args.command == "kernel":
                out = run_kernel(cfg, out_dir, threads)
            else:  # pragma: no cover - argparse guards this
                raise ConfigError(f"unknown command {args.command}")
        print(out)
        return EXIT_OK
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleProblemError as exc:
        print(f"infeasible margin problem: {exc}", file=sys.stderr)
        for i, k, shortfall in exc.violations[:10]:
            print(f"  point {i} vs class {k + 1}: shortfall {shortfall:.3g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CertificationError, DivergenceError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
