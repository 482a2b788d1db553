"""Command-line entry point: ``siapprox run | check | certify-kernel``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dfilter import SymbolInversionError, dual_filter, prefilter
from .harness import ExperimentConfig, identity_checks, run
from .kernel import autocorrelation_sequence, bspline, centered, strang_fix_order


def _load(path: str, seed: int | None) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if seed is not None:
        data["seed"] = seed
    return ExperimentConfig.from_dict(data)


def _emit(text: str, out: str | None, suffix: str):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    Path(out).with_suffix(suffix).write_text(text)


def cmd_run(args) -> int:
    config = _load(args.config, args.seed)
    out = args.out or config.out
    report = run(config, threads=args.threads)
    _emit(report.to_json(), out, ".json")
    if out is not None:
        _emit(report.to_csv(), out, ".csv")
    return 0 if report.passed else 1


def cmd_check(args) -> int:
    config = _load(args.config, args.seed)
    result = identity_checks(config)
    _emit(json.dumps(result, sort_keys=True, indent=2), args.out or config.out, ".json")
    return 0 if result["passed"] else 1


def certify_kernel(order: int, N: int = 4096) -> dict:
    """Strang-Fix order, Riesz bounds and filter decay of the order-``order`` B-spline."""
    k = centered(bspline(order))
    sf = strang_fix_order(k, max_L=order + 2)
    w = np.linspace(-np.pi, np.pi, 2049)
    acf = autocorrelation_sequence(k).symbol(w).real
    out = {
        "order": order,
        "strang_fix_order": sf,
        "riesz_lower": float(acf.min()),
        "riesz_upper": float(acf.max()),
        "version": __version__,
    }
    for name, make in (("dual", dual_filter), ("prefilter", prefilter)):
        try:
            filt = make(k, N)
        except SymbolInversionError as exc:
            out[name] = {"error": str(exc)}
            continue
        out[name] = {
            "support": [filt.start[0], filt.stop[0]],
            "rho": None if filt.decay is None else filt.decay.rho,
            "C": None if filt.decay is None else filt.decay.C,
        }
    out["passed"] = bool(sf == order and out["riesz_lower"] > 0 and "error" not in out["dual"])
    return out


def cmd_certify(args) -> int:
    result = certify_kernel(args.order)
    _emit(json.dumps(result, sort_keys=True, indent=2), args.out, ".json")
    return 0 if result["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siapprox", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path prefix; .json (and .csv) are appended")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads over h values")

    p = sub.add_parser("run", parents=[common], help="convergence experiment")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[common], help="identity suites")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("certify-kernel", parents=[common], help="kernel admissibility report")
    p.add_argument("--order", type=int, required=True)
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"siapprox: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
