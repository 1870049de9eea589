"""Command-line interface: `hardy-lab run`, `hardy-lab ledger`, `hardy-lab region`.

Exit codes: 0 success, 2 experiment assertion failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, ExperimentFailure, HardyLabError, LedgerMissing


def _cmd_run(args) -> int:
    from .experiments import load_config, run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    try:
        payload = run_experiment(cfg)
    except ExperimentFailure as exc:
        print(f"experiment failure [{exc.invariant}]: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(payload["summary"], indent=2, default=str))
    return 0


def _cmd_ledger(args) -> int:
    from .ledger import ConstantsLedger

    ledger = ConstantsLedger(Path(args.file))
    if args.ledger_cmd == "show":
        try:
            rows = ledger.show_rows()
        except LedgerMissing:
            rows = []
        if not rows:
            print("(empty ledger)")
            return 0
        width = max(len(r[0]) for r in rows)
        for key, value, tol, ts in rows:
            print(f"{key:<{width}}  {value:14.6g}  +/-{tol:<6.2g}  {ts}")
        return 0
    if args.ledger_cmd == "refit":
        if args.key is None or args.value is None:
            print("refit needs --key and --value", file=sys.stderr)
            return 3
        ledger.record(args.key, args.value, tolerance=args.tolerance, refit=True)
        print(f"recorded {args.key} = {args.value}")
        return 0
    if args.ledger_cmd == "diff":
        try:
            current = {}
            if args.against:
                current = {
                    k: v["value"] if isinstance(v, dict) else float(v)
                    for k, v in json.loads(Path(args.against).read_text()).items()
                }
            drifted = ledger.diff(current)
        except LedgerMissing as exc:
            print(f"ledger error: {exc}", file=sys.stderr)
            return 3
        if drifted:
            for key, ref, cur, tol in drifted:
                print(f"DRIFT {key}: recorded {ref:.6g}, current {cur:.6g} (tol {tol:.2g})")
            return 2
        print("no drift beyond tolerance")
        return 0
    return 3


def _cmd_region(args) -> int:
    from .riesz import RegionPoint, region_contains

    params = {"n": args.n}
    for name in ("p_minus", "p_plus", "eps", "eps_star"):
        val = getattr(args, name)
        if val is not None:
            params[name] = val
    try:
        member = region_contains(args.variant, RegionPoint.of(args.s, args.inv_p), params)
    except HardyLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print("inside" if member else "outside")
    return 0


def _cmd_symbols(args) -> int:
    from .funcalc import symbol_registry_json

    print(symbol_registry_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hardy-lab",
        description="Numerical laboratory for divergence-form elliptic operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a TOML/JSON config")
    p_run.add_argument("config", help="path to the experiment configuration")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_led = sub.add_parser("ledger", help="manage the fitted-constants ledger")
    p_led.add_argument("ledger_cmd", choices=["show", "refit", "diff"])
    p_led.add_argument("--file", default="constants-ledger.json")
    p_led.add_argument("--key", default=None)
    p_led.add_argument("--value", type=float, default=None)
    p_led.add_argument("--tolerance", type=float, default=0.25)
    p_led.add_argument("--against", default=None, help="JSON of current values for diff")
    p_led.set_defaults(fn=_cmd_ledger)

    p_reg = sub.add_parser("region", help="evaluate a region predicate")
    p_reg.add_argument("--variant", required=True, choices=["R1", "R2", "R1_of_L", "R2_of_L"])
    p_reg.add_argument("--n", type=int, required=True)
    p_reg.add_argument("--s", type=str, required=True)
    p_reg.add_argument("--inv-p", dest="inv_p", type=str, required=True)
    p_reg.add_argument("--p-minus", dest="p_minus", type=str, default=None)
    p_reg.add_argument("--p-plus", dest="p_plus", type=str, default=None)
    p_reg.add_argument("--eps", type=str, default=None)
    p_reg.add_argument("--eps-star", dest="eps_star", type=str, default=None)
    p_reg.set_defaults(fn=_cmd_region)

    p_sym = sub.add_parser("symbols", help="print the built-in symbol registry")
    p_sym.set_defaults(fn=_cmd_symbols)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
