"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 numerical
failure (including a failed verification criterion).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .exceptions import ConfigError, HamiltonianError, NumericalError, PreconditionError, SignBiasError
from .pauli import is_stoquastic
from .recipes import FIGURES, reproduce_figure, write_table
from .runner import build_from_config, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

STEP_COMMANDS = {"kernel": "kernel", "flow": "flow", "metrics": "metrics",
                 "init-stats": "init_stats", "basis-scan": "scan", "sr": "sr", "mps-ck": "mps_ck"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signbias", description="Kernel-limit simulation of neural quantum states.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the pipeline declared in a config")
    _common(p)
    p = sub.add_parser("model-info", help="print model size, spectrum summary and stoquasticity")
    _common(p)
    for name in STEP_COMMANDS:
        p = sub.add_parser(name, help=f"run only the '{STEP_COMMANDS[name]}' step of a config")
        _common(p)
    p = sub.add_parser("reproduce-figure", help="run a figure protocol")
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a protocol default (value parsed as JSON)")
    _common(p, config_required=False)
    p = sub.add_parser("verify", help="run the acceptance criteria")
    p.add_argument("--criteria", default=None, help="comma-separated criterion numbers")
    _common(p, config_required=False)
    return parser


def _overrides(items) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _model_info(args) -> int:
    cfg = load_config(args.config)
    h, _ = build_from_config(cfg)
    spec = h.spectrum()
    info = {"n_qubits": h.n_qubits, "n_terms": len(h.terms), "locality": h.locality,
            "ground_energy": spec.ground_energy, "gap": spec.gap,
            "ground_degeneracy": spec.degeneracy, "stoquastic": is_stoquastic(h)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / f"model_info.{args.format}",
                    {k: [float(v)] for k, v in info.items()}, args.format)
    print(json.dumps(info, indent=2))
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_all

    nums = None
    if args.criteria:
        nums = [int(x) for x in args.criteria.split(",")]
        if any(n < 1 or n > 14 for n in nums):
            raise ValueError("criteria are numbered 1 to 14")
    results = run_all(nums)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / f"verify.{args.format}",
                    {"criterion": [r.number for r in results],
                     "passed": [float(r.passed) for r in results],
                     "runtime_s": [r.runtime_s for r in results]}, args.format)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def _figure(args) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    res = reproduce_figure(args.figure, overrides)
    out = Path(args.out or f"{args.figure}_out")
    res.write(out, args.format)
    for key, c in res.correlations.items():
        print(f"{key}: spearman {c.rho:+.3f} (n={c.n_used})")
    for key, ok in res.checks.items():
        print(f"{key}: {'pass' if ok else 'fail'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "model-info":
            return _model_info(args)
        if args.command == "verify":
            return _verify(args)
        if args.command == "reproduce-figure":
            return _figure(args)
        cfg = load_config(args.config)
        if args.command != "run":
            cfg["pipeline"] = [STEP_COMMANDS[args.command]]
        out = args.out or "signbias_out"
        man = run_experiment(cfg, out, seed=args.seed, threads=args.threads, fmt=args.format)
        for name, digest in man.outputs.items():
            print(f"{Path(out) / name}  sha256={digest[:16]}")
        return EXIT_OK
    except (ConfigError, HamiltonianError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PreconditionError, SignBiasError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser"]
