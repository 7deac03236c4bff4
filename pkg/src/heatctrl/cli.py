"""Command-line harness for the experiment drivers.

Subcommands: truncation | qmc-rms | optimize | cbc-build.  Parameters come
from an optional ``key = value`` config file with flag overrides on top;
every run writes a manifest plus CSV outputs into the chosen directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .studies import StudyConfig, run_cbc_build, run_optimize, run_qmc_rms, run_truncation

_RUNNERS = {
    "truncation": run_truncation,
    "qmc-rms": run_qmc_rms,
    "optimize": run_optimize,
    "cbc-build": run_cbc_build,
}

_FIELD_TYPES = {f.name: f for f in dataclasses.fields(StudyConfig)}
_STRING_FIELDS = {"study", "out", "cache_dir", "vector_file"}


def _parse_value(name: str, raw: str):
    if name == "s_list":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if raw.lower() in ("none", ""):
        return None
    if name in _STRING_FIELDS:
        return raw
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def read_config_file(path: str) -> dict:
    """Parse a plain 'key = value' file ('#' starts a comment)."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown parameter '{key}'")
            overrides[key] = _parse_value(key, raw)
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatctrl",
        description="Heat-equation optimal control studies with shifted lattice rules",
    )
    sub = parser.add_subparsers(dest="study", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--paper-scale", action="store_true",
                       help="restore the full-size configuration (very slow)")
        p.add_argument("--out", help="output directory")
        for fname, f in _FIELD_TYPES.items():
            if fname in ("study", "out"):
                continue
            p.add_argument(f"--{fname.replace('_', '-')}", dest=fname, default=None)
    return parser


def config_from_args(args) -> StudyConfig:
    values = {"study": args.study}
    if args.config:
        values.update(read_config_file(args.config))
    for fname in _FIELD_TYPES:
        if fname == "study":
            continue
        raw = getattr(args, fname, None)
        if raw is not None:
            values[fname] = raw if not isinstance(raw, str) else _parse_value(fname, raw)
    cfg = StudyConfig(**values)
    if args.paper_scale:
        cfg = cfg.with_paper_scale()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        result = _RUNNERS[args.study](cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if "slopes" in result:
        for name, slope in result["slopes"].items():
            print(f"{name}: fitted slope {slope:+.3f}")
    for key in ("csv", "vector_file"):
        if key in result:
            print(f"wrote {result[key]}")
    if args.study == "optimize":
        for mode in ("constrained", "unconstrained"):
            trace = result[mode]["trace"]
            print(f"{mode}: J {trace.J[0]:.6e} -> {trace.J[-1]:.6e} "
                  f"in {trace.iters[-1]} iterations")
            print(f"wrote {result[mode]['trace_csv']}")
            print(f"wrote {result[mode]['control_csv']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
