"""Command-line entry point for the experiment harness.

Subcommands reproduce the synthetic and real-data studies at desk scale by
default; ``--paper-scale`` restores the published protocol sizes and
``--smoke`` divides iteration counts by 100 (and widths by 2, seeds to 2)
for an end-to-end sanity run. The dataset cache directory can be pointed
at via the BNNUQ_DATA_DIR environment variable.
"""

from __future__ import annotations

import argparse
import sys

from .data import DATA_DIR_ENV
from .experiments import ExperimentConfig
from .experiments import (active, fig2, fig3, fig4, init_study,
                          random_clusters, theorems)

RUNNERS = {
    "fig2": (fig2.run, (1,)),
    "fig3": (fig3.run, (1,)),
    "fig4": (fig4.run, (1, 2, 3, 4)),
    "random-clusters": (random_clusters.run, (1, 3)),
    "active": (active.run, (1, 2)),
    "init-study": (init_study.run, (2,)),
    "check-theorems": (theorems.run, (1,)),
}


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnnuq",
        description="Reproduce the predictive-uncertainty experiments "
                    "(synthetic clusters, depth studies, active learning).",
        epilog=f"Set {DATA_DIR_ENV} to point at a dataset cache directory.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--depths", type=_int_list, default=None,
                       help="comma-separated hidden-layer counts")
        p.add_argument("--seeds", type=_int_list, default=(0,),
                       help="comma-separated seeds")
        p.add_argument("--width", type=int, default=50)
        p.add_argument("--methods", type=lambda s: tuple(s.split(",")),
                       default=(), help="subset of methods to run")
        p.add_argument("--outdir", default="results")
        p.add_argument("--paper-scale", action="store_true",
                       help="use the published protocol sizes")
        p.add_argument("--smoke", action="store_true",
                       help="iterations/100, width/2, two seeds")
        p.add_argument("--data", default=None,
                       help="path to a raw dataset file (active learning)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    runner, default_depths = RUNNERS[args.experiment]
    cfg = ExperimentConfig(
        experiment=args.experiment,
        outdir=args.outdir,
        depths=args.depths or default_depths,
        seeds=args.seeds,
        methods=args.methods,
        width=args.width,
        paper_scale=args.paper_scale,
        smoke=args.smoke,
        data_path=args.data,
    )
    out = runner(cfg)
    if args.experiment == "check-theorems":
        failed = [name for name, rpt in out.items() if not rpt.passed]
        if failed:
            print(f"bound violations detected: {', '.join(failed)}",
                  file=sys.stderr)
            return 1
        print("all bound checks passed")
        return 0
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
