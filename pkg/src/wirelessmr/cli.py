"""Command-line front end: ``wirelessmr {analyze,simulate,sweep,verify}``.

Exit status: 0 success, 1 invalid configuration, 2 verification failure,
3 internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import alpha_grid, convergence_sweep, empirical_ncl, fig3_table
from .model import ConfigError, SystemConfig, load_config, parse_config_text
from .placement import MissingIVError, centralized_reduce, reduce_phase
from .shuffle import PlanError, Scheme, prepare_system, reassemble

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULT_CONFIG = """\
K = 4
mu = 1/2
Q = 4
eta = 1
F = 240
L = 256
B = 64
alpha = 2/3
P = 1e12
seed = 0
"""


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    return "inf" if math.isinf(value) else repr(value)


def resolve_config(args) -> SystemConfig:
    overrides: Dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(item, "--set expects key=value")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.power is not None:
        overrides["P"] = args.power
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return parse_config_text(DEFAULT_CONFIG, overrides)


def manifest(args, cfg: SystemConfig, **extra) -> dict:
    doc = {
        "tool": "wirelessmr",
        "version": __version__,
        "subcommand": args.command,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
    }
    doc.update(extra)
    return doc


def _header(doc: dict) -> str:
    return "# manifest: " + json.dumps(doc, sort_keys=True) + "\n"


def _write(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header: List[str], rows: List[List[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_analyze(args) -> int:
    cfg = resolve_config(args)
    step = Fraction(args.alpha_step)
    rows = []
    for row in fig3_table(cfg.mu, cfg.K, alpha_grid(step)):
        rows.append(
            [_fmt(row["alpha"])]
            + [_fmt(row[k].value) for k in ("delta_cm", "delta_zf", "delta_sp", "delta_ts")]
            + ["", "", ""]
        )
    doc = manifest(args, cfg, schemes=["cm", "zf", "sp", "ts"], alpha_step=str(step), trials=0)
    header = ["alpha", "delta_cm", "delta_zf", "delta_sp", "delta_ts", "delta_emp", "stderr", "trials"]
    _write(args, _header(doc) + _csv(header, rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    system = prepare_system(cfg, args.scheme)
    est = empirical_ncl(cfg, args.scheme, args.trials, oracle=args.oracle, system=system)
    # per-block diagnostics of the first trial, re-run deterministically
    first = system.shuffle(None if args.oracle else np.random.default_rng([cfg.seed, 0]), oracle=args.oracle)
    blocks = [
        {
            "block": i,
            "duration": _fmt(o.duration),
            "feasible": o.feasible,
            "rates": {k: _fmt(v) for k, v in sorted(o.rates.items())},
        }
        for i, o in enumerate(first.per_block, 1)
    ]
    summary = {
        "manifest": manifest(args, cfg, schemes=[args.scheme], trials=args.trials, oracle=args.oracle),
        "delta_emp": _fmt(est.value),
        "stderr": _fmt(est.stderr),
        "delta_closed": str(est.closed_form),
        "trials": est.trials,
        "successes": est.successes,
        "plan": {
            "blocks": len(system.plan),
            "layout": system.plan.layout.describe(),
            "metadata": system.plan.metadata,
        },
        "delivery": first.report.lines()[:20] if first.report else [],
        "first_trial_blocks": blocks,
    }
    _write(args, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if est.successes == est.trials else EXIT_VERIFY


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    powers = [float(p) for p in args.powers.split(",")]
    rows, status = convergence_sweep(cfg, args.scheme, powers, args.trials)
    doc = manifest(args, cfg, schemes=[args.scheme], trials=args.trials, powers=[_fmt(p) for p in powers])
    header = ["P", "delta_emp", "stderr", "gap", "delta_closed", "trials"]
    body = [[_fmt(r.P), _fmt(r.estimate), _fmt(r.stderr), _fmt(r.gap), str(r.closed_form), str(r.trials)] for r in rows]
    _write(args, _header(doc) + _csv(header, body) + f"# status: {status}\n")
    # wall-clock goes to a sidecar so the table itself stays reproducible
    timing = _csv(["P", "seconds"], [[_fmt(r.P), f"{r.seconds:.3f}"] for r in rows])
    if args.out:
        with open(f"{args.out}.timing", "w", encoding="utf-8", newline="") as fh:
            fh.write(timing)
    else:
        sys.stderr.write(timing)
    return EXIT_OK


def run_verify(cfg: SystemConfig, scheme, plan=None) -> dict:
    """Map, noiseless Shuffle and Reduce; compare every output with the oracle."""
    system = prepare_system(cfg, scheme, plan)
    result = system.shuffle(oracle=True)
    oracle = centralized_reduce(cfg, system.files)
    outputs = {}
    for node in range(1, cfg.K + 1):
        got = reassemble(result.delivered.get(node, []), system.plan.layout)
        try:
            outputs.update(reduce_phase(node, cfg, system.assignment, system.stores[node], got))
        except MissingIVError:
            continue  # its outputs show up as mismatches below
    mismatches = sorted(q for q in oracle if outputs.get(q) != oracle[q])
    return {
        "system": system,
        "result": result,
        "outputs": outputs,
        "oracle": oracle,
        "mismatches": mismatches,
        "ok": result.success and not mismatches,
    }


def cmd_verify(args) -> int:
    cfg = resolve_config(args)
    run = run_verify(cfg, args.scheme)
    plan = run["system"].plan
    lines = [
        f"scheme: {plan.scheme.value}",
        f"blocks: {len(plan)}",
        f"layout: {plan.layout.describe()}",
        f"metadata: {json.dumps(plan.metadata, sort_keys=True)}",
        f"delivery: {'complete' if run['result'].success else 'FAILED'}",
        f"reduce outputs matching oracle: {cfg.Q - len(run['mismatches'])}/{cfg.Q}",
    ]
    lines += run["result"].report.lines()
    for q in run["mismatches"]:
        got = run["outputs"].get(q)
        lines.append(f"mismatch f{q}: got {got.hex() if got else None} want {run['oracle'][q].hex()}")
    lines.append("verdict: " + ("PASS" if run["ok"] else "FAIL"))
    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(plan.to_text())
    return EXIT_OK if run["ok"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wirelessmr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--alpha", help="CSI precision exponent, e.g. 2/3")
    common.add_argument("--power", help="transmit power / SNR P, e.g. 1e12")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    schemes = [s.value for s in Scheme]

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", parents=[common], help="closed-form loads over an alpha grid")
    p.add_argument("--alpha-step", default="1/100")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo load estimate at one power")
    p.add_argument("--scheme", choices=schemes, default="sp")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--oracle", action="store_true", help="noiseless transport at ideal rates")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="convergence of the estimate across powers")
    p.add_argument("--scheme", choices=schemes, default="sp")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--powers", default="1e4,1e6,1e8,1e10,1e12")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="end-to-end Map/Shuffle/Reduce check")
    p.add_argument("--scheme", choices=schemes, default="sp")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PlanError, AssertionError) as exc:
        print(f"error: internal assertion: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
