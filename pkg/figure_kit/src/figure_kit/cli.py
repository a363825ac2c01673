"""Command line front end: ``figures <job.toml>`` or one job via flags."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureJob, load_jobs, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render figures from CSV tables. Pass a TOML job file, "
        "or describe a single figure with flags.",
    )
    parser.add_argument("job", nargs="?", help="TOML file with [figure] tables")
    parser.add_argument("--kind", choices=KINDS, help="figure kind")
    parser.add_argument("--input", help="input CSV path")
    parser.add_argument("--output", help="output image path (.svg or .png)")
    parser.add_argument(
        "--y",
        action="append",
        default=None,
        metavar="COL",
        help="y column; repeat for several series",
    )
    for flag in ("x", "yerr", "theory", "row", "col", "value", "group"):
        parser.add_argument(f"--{flag}", metavar="COL")
    for flag in ("title", "xlabel", "ylabel"):
        parser.add_argument(f"--{flag}")
    return parser


def _job_from_args(args: argparse.Namespace) -> FigureJob:
    for required in ("kind", "input", "output"):
        if getattr(args, required) is None:
            raise ValueError(f"--{required} is required when no job file is given")
    return FigureJob(
        kind=args.kind,
        input=args.input,
        output=args.output,
        x=args.x,
        y=tuple(args.y or ()),
        yerr=args.yerr,
        theory=args.theory,
        row=args.row,
        col=args.col,
        value=args.value,
        group=args.group,
        title=args.title,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.job:
            jobs = load_jobs(args.job)
        else:
            jobs = [_job_from_args(args)]
        for job in jobs:
            print(f"wrote {render(job)}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
