"""CLI: render one experiment directory into a figure file."""

from __future__ import annotations

import argparse

from .render import FIGURE_KINDS, FigureSpec, plot_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnnuq-plot",
        description="Render bnnuq experiment CSVs into figures.")
    parser.add_argument("--experiment", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--indir", required=True,
                        help="directory holding the experiment's CSV files")
    parser.add_argument("--out", required=True,
                        help="output image path (.png or .svg)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = plot_experiment(FigureSpec(args.experiment, args.indir, args.out))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
