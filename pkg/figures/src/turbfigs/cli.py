"""CLI: figures <kind> --report <path> [--report <path>...] --out <path>."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .render import FIGURE_KINDS, FigureSpec, render
from .report import ReportParseError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render crosstalk heatmaps, QDER bar charts, and mode galleries",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument(
        "--report",
        action="append",
        required=True,
        help="report.json path (or its directory); repeat for multi-panel figures",
    )
    parser.add_argument("--out", required=True, help="output path without extension")
    parser.add_argument(
        "--format",
        action="append",
        choices=("png", "svg"),
        help="output format(s); default: png and svg",
    )
    parser.add_argument("--label", help="basis label to select, e.g. d2:OAM")
    parser.add_argument("--cmap", default="viridis")
    parser.add_argument("--no-thresholds", action="store_true")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        reports=tuple(args.report),
        out=args.out,
        formats=tuple(args.format) if args.format else ("png", "svg"),
        label=args.label,
        cmap=args.cmap,
        threshold_lines=not args.no_thresholds,
        dpi=args.dpi,
    )
    try:
        written = render(spec)
    except (ReportParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
