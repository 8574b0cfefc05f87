"""``aqm-lab`` command line.

    aqm-lab run --config run.yaml [--seed N] [--out results.csv]
    aqm-lab sweep --scenario 1 --schemes msqm,red,rio,pi --flows 0:200:25 \\
                  --fixed 100 --seeds 1..5 --scale 1.0 --out results/

Exit status: 0 on success, 1 for invalid input, 2 when a run fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .metrics import to_csv_text, write_csv
from .sweep import SweepError, SweepSpec, run_once, run_sweep

log = logging.getLogger("aqm_lab")


def parse_flows(text):
    try:
        start, stop, step = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    return start, stop, step


def parse_seeds(text):
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N..M or a comma list, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="aqm-lab", description="Dumbbell AQM simulator (M-SQM, RED, RIO, PI).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug (stderr)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration and emit one CSV row")
    r.add_argument("--config", required=True, help="YAML run configuration")
    r.add_argument("--seed", type=int, help="override the configured seed")
    r.add_argument("--out", help="CSV destination (default: output.path, else stdout)")

    s = sub.add_parser("sweep", help="run a scenario sweep")
    s.add_argument("--scenario", type=int, choices=(1, 2), required=True)
    s.add_argument("--schemes", default="msqm,red,rio,pi")
    s.add_argument("--flows", type=parse_flows, default=(0, 200, 25), help="start:stop:step (inclusive)")
    s.add_argument("--fixed", type=int, default=100, help="flows of the fixed class")
    s.add_argument("--seeds", type=parse_seeds, default=[1, 2, 3, 4, 5], help="N..M or a,b,c")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--duration", type=float, help="simulated seconds per run")
    s.add_argument("--config", help="YAML base configuration (scheme key is overridden)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True, help="output directory or .csv path")
    return p


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    rec = run_once(cfg)
    out = args.out or cfg.output.path
    if out:
        write_csv([rec], out)
    else:
        sys.stdout.write(to_csv_text([rec]))


def _cmd_sweep(args):
    spec = SweepSpec(
        scenario=args.scenario,
        schemes=[s.strip() for s in args.schemes.split(",") if s.strip()],
        flows=args.flows,
        fixed_flows=args.fixed,
        seeds=args.seeds,
        scale=args.scale,
    )
    if args.config:
        base = load_config(args.config)
    else:
        base = RunConfig(scheme=spec.schemes[0])
    if args.duration is not None:
        base = dataclasses.replace(base, duration_s=args.duration)
    if args.jobs < 1:
        raise ValueError("--jobs must be >= 1")
    run_sweep(spec, base, out=args.out, jobs=args.jobs)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            _cmd_run(args)
        else:
            _cmd_sweep(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"aqm-lab: error: {exc}", file=sys.stderr)
        return 1
    except (SweepError, RuntimeError, OSError) as exc:
        print(f"aqm-lab: run failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
