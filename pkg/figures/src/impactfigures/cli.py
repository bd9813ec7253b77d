"""Command line: `figures <kind> --in diagnostics.csv --out figure.png`."""

import argparse
import sys

from .render import FIGURE_KINDS, FigureError, FigureJob, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render exported model-diagnostic CSVs into figures.",
    )
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS), help="figure kind")
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--log-y", action="store_true", help="log-scale value axis")
    parser.add_argument("--interval-label", default="90%",
                        help="label for the interval level shown")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    job = FigureJob(
        kind=args.kind,
        inputs=args.inputs,
        out=args.out,
        options={"log_y": args.log_y, "interval_label": args.interval_label},
    )
    try:
        out = render(job)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
