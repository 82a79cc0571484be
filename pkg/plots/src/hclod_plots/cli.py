"""Command-line figure generation from solver CSV outputs."""

from __future__ import annotations

import argparse
import sys

from .figures import PlotInputError, PlotSpec, plot_convergence, plot_decay, plot_field


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hclod-plot",
        description="Render convergence, decay, and field figures from hclod CSVs",
    )
    sub = parser.add_subparsers(dest="kind", required=True)

    p_conv = sub.add_parser("convergence", help="log-log error history")
    p_conv.add_argument("inputs", nargs="+", help="method CSVs from 'hclod converge'")
    p_conv.add_argument("-o", "--output", required=True, help="output PNG path")
    p_conv.add_argument(
        "--norm", default="energy", choices=("energy", "l2A", "l2"),
        help="which relative error column to plot",
    )
    p_conv.add_argument(
        "--no-guides", action="store_true", help="omit the slope-1/2 guide lines"
    )

    p_dec = sub.add_parser("decay", help="corrector decay semilog plot")
    p_dec.add_argument("inputs", nargs="+", help="decay CSVs from 'hclod decay'")
    p_dec.add_argument("-o", "--output", required=True)

    p_fld = sub.add_parser("field", help="real-part heat map or coefficient image")
    p_fld.add_argument("inputs", nargs=1, help="field CSV or coefficient cells file")
    p_fld.add_argument("-o", "--output", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "convergence":
            spec = PlotSpec(
                inputs=args.inputs, kind="convergence", output=args.output,
                norm=args.norm,
                slope_guides=() if args.no_guides else (1, 2),
            )
            plot_convergence(spec)
        elif args.kind == "decay":
            plot_decay(PlotSpec(inputs=args.inputs, kind="decay", output=args.output))
        else:
            plot_field(PlotSpec(inputs=args.inputs, kind="field", output=args.output))
    except (PlotInputError, OSError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
