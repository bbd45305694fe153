"""Command-line entry point: ``fpplab <experiment> [flags]``.

Exit status is 0 when every per-sample deterministic check of the run
passed, 1 when one failed, and 2 for configuration or I/O errors.
"""

import argparse
import logging
import sys

from .errors import ConfigError
from .harness import ENV_PREFIX, KINDS, load_config, run

log = logging.getLogger("fpplab")

_HELP = {
    "gen": "sample one Poisson scene and write its points and Delaunay edges",
    "mu": "estimate the time constant from T(0, n)/n",
    "eta": "crossing frequencies of the 3L x L rectangle over a p grid",
    "pcstar": "bisect the Voronoi-side crossing threshold",
    "pc": "bisect the Delaunay-side crossing threshold",
    "renorm": "good-box fields, circuit counts and the M <= 6 T bound",
    "shape": "directional passage times and isotropy statistics",
    "verify": "run every per-sample deterministic check",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fpplab",
        description="Experiments on first-passage and bond percolation over Poisson-Delaunay "
                    f"graphs. Flags override {ENV_PREFIX}* environment variables, which "
                    "override the config file.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for kind in KINDS:
        p = sub.add_parser(kind, help=_HELP[kind], description=_HELP[kind])
        p.add_argument("--config", help=f"TOML config file (env {ENV_PREFIX}CONFIG)")
        p.add_argument("--seed", type=int, help=f"master seed, 0 <= seed < 2**64 (env {ENV_PREFIX}SEED)")
        p.add_argument("--reps", type=int, help=f"replicates per probe (env {ENV_PREFIX}REPS)")
        p.add_argument("--out", help=f"output directory (env {ENV_PREFIX}OUT)")
        p.add_argument("--jobs", type=int, help=f"worker processes (env {ENV_PREFIX}JOBS)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"experiment": args.experiment, "seed": args.seed,
                                        "reps": args.reps, "out": args.out, "jobs": args.jobs})
    except ConfigError as exc:
        print(f"fpplab: {exc}", file=sys.stderr)
        return 2
    log.info("running %s (config %s)", cfg.experiment, cfg.hash[:12])
    try:
        rec = run(cfg)
    except OSError as exc:
        print(f"fpplab: {exc}", file=sys.stderr)
        return 2
    for key, path in sorted(rec.outputs.items()):
        print(f"{key}: {path}")
    print(f"wall time: {rec.wall_time:.2f} s")
    if not rec.checks_passed:
        print("fpplab: a per-sample deterministic check failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
