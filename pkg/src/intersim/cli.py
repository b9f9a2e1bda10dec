"""Command-line entry points.

  intersim simulate --config c.json [--seed N] [--scheme fifo|trust|lane|both]
                    [--mitigation on|off] --out DIR
  intersim sweep    --config c.json --axis attacker.fake_fraction
                    --values 0.0,0.1,0.2 --seeds 1,2,3 --out DIR
                    [--scheme ...] [--mitigation ...]
  intersim report   --in DIR

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config, parse_config
from .engine import SCHEMES, run_scenario, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_values(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(json.loads(part))
        except json.JSONDecodeError:
            out.append(part)
    if not out:
        raise ConfigError("empty value list")
    return out


def _parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError("seeds must be a comma-separated integer list")
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def build_parser():
    parser = argparse.ArgumentParser(
        prog="intersim",
        description="Trust-aware coordination of connected vehicles at a "
                    "signal-free intersection")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--scheme", choices=SCHEMES, default="fifo")
    sim.add_argument("--mitigation", choices=("on", "off"), default=None)
    sim.add_argument("--out", required=True)

    swp = sub.add_parser("sweep", help="run a parameter sweep")
    swp.add_argument("--config", required=True)
    swp.add_argument("--axis", required=True,
                     help="dotted config path, e.g. attacker.fake_fraction")
    swp.add_argument("--values", required=True,
                     help="comma-separated values for the axis")
    swp.add_argument("--seeds", required=True,
                     help="comma-separated integer seeds")
    swp.add_argument("--scheme", choices=SCHEMES, default="fifo")
    swp.add_argument("--mitigation", choices=("on", "off"), default=None)
    swp.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="summarize finished runs")
    rep.add_argument("--in", dest="in_dir", required=True)
    return parser


def _mitigation_flag(arg):
    if arg is None:
        return None
    return arg == "on"


def _cmd_simulate(args):
    cfg = load_config(args.config)
    summary = run_scenario(cfg, scheme=args.scheme,
                           mitigation=_mitigation_flag(args.mitigation),
                           seed=args.seed, out_dir=args.out)
    _print_summary(summary, os.path.join(args.out, "summary.json"))
    return EXIT_OK


def _cmd_sweep(args):
    with open(args.config) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    values = _parse_values(args.values)
    seeds = _parse_seeds(args.seeds)
    table = run_sweep(raw, args.axis, values, seeds, args.out,
                      scheme=args.scheme,
                      mitigation=_mitigation_flag(args.mitigation),
                      parse=parse_config)
    print("sweep: %d runs written under %s" % (len(table), args.out))
    return EXIT_OK


def _find_summaries(root):
    out = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if "summary.json" in filenames:
            out.append(os.path.join(dirpath, "summary.json"))
    return out


def _cmd_report(args):
    if not os.path.isdir(args.in_dir):
        raise ConfigError("no such directory: %s" % args.in_dir)
    paths = _find_summaries(args.in_dir)
    if not paths:
        raise ConfigError("no summary.json under %s" % args.in_dir)
    print("%-40s %6s %8s %10s %9s %5s" %
          ("run", "seed", "exited", "avg_time", "flagged", "safe"))
    for path in paths:
        with open(path) as fh:
            s = json.load(fh)
        name = os.path.relpath(os.path.dirname(path), args.in_dir) or "."
        avg = s["averages"]["travel_time"]
        print("%-40s %6s %8d %10s %9d %5s" %
              (name, s["seed"], s["counts"]["real_exited"],
               "-" if avg is None else "%.2f" % avg,
               s["counts"]["fake_flagged"],
               "yes" if s["safety"]["safe"] else "NO"))
    return EXIT_OK


def _print_summary(summary, path):
    c = summary["counts"]
    avg = summary["averages"]["travel_time"]
    print("scheme=%s mitigation=%s seed=%s" %
          (summary["scheme"], summary["mitigation"], summary["seed"]))
    print("vehicles: %d real (%d exited), %d fake (%d flagged), "
          "%d false positives" %
          (c["real_total"], c["real_exited"], c["fake_total"],
           c["fake_flagged"], c["false_positives"]))
    print("avg travel time: %s   safe: %s" %
          ("-" if avg is None else "%.2f s" % avg,
           "yes" if summary["safety"]["safe"] else "NO"))
    print("written: %s" % path)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": _cmd_simulate, "sweep": _cmd_sweep,
                "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:   # runtime failure contract of the CLI
        print("runtime error: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
