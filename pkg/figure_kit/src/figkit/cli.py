"""Command line: render a figure from study CSV outputs.

    figkit loglog  --csv out/truncation.csv --out fig.png --slopes -1.6,-4.2
    figkit heatmap --csv out/control_constrained.csv --out fig.png --times 0,0.5,1
    figkit trace   --csv out/trace_constrained.csv out/trace_unconstrained.csv --out fig.png

Every input CSV is checked against the manifest in its directory (override
with --manifest); the tool exits nonzero on any hash or schema mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .figures import plot_heatmap, plot_loglog, plot_trace
from .io import (ManifestMismatchError, SchemaError, read_table,
                 read_trajectory, sibling_manifest, verify_against_manifest)


def build_parser():
    parser = argparse.ArgumentParser(prog="figkit",
                                     description="Render heatctrl study figures")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in ("loglog", "heatmap", "trace"):
        p = sub.add_parser(kind)
        p.add_argument("--csv", nargs="+", required=True,
                       help="input CSV file(s)")
        p.add_argument("--out", required=True, help="output image path")
        p.add_argument("--manifest", default=None,
                       help="manifest path (default: manifest.txt next to the CSV)")
        p.add_argument("--skip-verify", action="store_true",
                       help="render without checking the manifest hash")
    sub.choices["loglog"].add_argument(
        "--slopes", default="", help="comma-separated reference slopes")
    sub.choices["loglog"].add_argument("--x-column", default=None)
    sub.choices["heatmap"].add_argument(
        "--times", default="0,0.25,0.5,0.75,1", help="comma-separated times")
    return parser


def _verified(obj, args):
    if not args.skip_verify:
        verify_against_manifest(obj, args.manifest or sibling_manifest(obj.path))
    return obj


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "loglog":
            if len(args.csv) != 1:
                raise SchemaError("loglog takes exactly one CSV")
            table = _verified(read_table(args.csv[0]), args)
            slopes = tuple(float(s) for s in args.slopes.split(",") if s.strip())
            info = plot_loglog(table, args.out, x_column=args.x_column,
                               guide_slopes=slopes)
        elif args.kind == "heatmap":
            if len(args.csv) != 1:
                raise SchemaError("heatmap takes exactly one CSV")
            dump = _verified(read_trajectory(args.csv[0]), args)
            times = tuple(float(t) for t in args.times.split(",") if t.strip())
            info = plot_heatmap(dump, args.out, times=times)
        else:
            tables = [_verified(read_table(path), args) for path in args.csv]
            info = plot_trace(tables, args.out)
    except (ManifestMismatchError, SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {info['path']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
