"""Command-line front end: compress, decompress, stats, ablate, synth.

Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import kvtext
from .ablation import format_report, resolve_rows, run_ablation
from .artifact import (
    ArtifactError,
    QuantizationOverflow,
    compression_ratio,
    deserialize,
    make_artifact,
    serialize,
)
from .config import ConfigError, load_configs
from .decoder import reconstruct_grid, refine_grid, stats
from .gridfield import FieldFormatError, GridField4D, GridSpec, OutOfDomainError, load_field, store_field
from .synth import SynthSpec, synth_field
from .trainer import TrainingDivergence, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _emit(pairs: dict, out=None):
    (out or sys.stdout).write(kvtext.dumps(pairs))


def cmd_compress(args) -> int:
    field = load_field(args.input)
    try:
        mcfg, tcfg = load_configs(args.config, seed=args.seed, workers=args.workers)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    result = train(field, mcfg, tcfg, out=sys.stdout)
    art = make_artifact(result, field, tcfg.digest())
    nbytes = serialize(art, args.output)
    report = stats(art, field, workers=args.workers)
    pairs = report.as_pairs()
    pairs.update(artifact_bytes=nbytes, compression_ratio=compression_ratio(field, args.output),
                 steps=result.history.steps)
    _emit(pairs)
    return EXIT_OK


def parse_grid(arg: str, native: GridSpec) -> GridSpec:
    """A key=value grid file, or refinement factors such as ``lon=2,lat=2``."""
    if os.path.exists(arg):
        pairs = kvtext.load(arg)
        coords = {}
        for key in ("times", "pressures", "lats", "lons"):
            coords[key] = kvtext.parse_floats(pairs[key]) if key in pairs else getattr(native, key)
        return GridSpec(**coords)
    factors = {"time": 1, "lat": 1, "lon": 1}
    for item in filter(None, arg.split(",")):
        key, _, value = item.partition("=")
        if key.strip() not in factors or not value.strip().isdigit() or int(value) < 1:
            raise UsageError(f"bad --grid entry {item!r}; expected a grid file or time=K,lat=K,lon=K")
        factors[key.strip()] = int(value)
    return refine_grid(native, **factors)


def cmd_decompress(args) -> int:
    art = deserialize(args.artifact)
    grid = parse_grid(args.grid, art.grid) if args.grid else None
    field = reconstruct_grid(art, grid, workers=args.workers)
    store_field(field, args.output)
    _emit({"shape": list(field.shape), "output": args.output})
    return EXIT_OK


def cmd_stats(args) -> int:
    if not 0.0 < args.quantile < 1.0:
        raise UsageError("--quantile must lie in (0, 1)")
    art = deserialize(args.artifact)
    original = load_field(args.original)
    report = stats(art, original, args.quantile, workers=args.workers)
    _emit(report.as_pairs())
    if args.hist:
        kvtext.dump({"edges": report.hist_edges, "counts": report.hist_counts.astype(np.int64)}, args.hist)
    if args.maps:
        for label, arr in (("mean", report.per_location_mean), ("std", report.per_location_std)):
            m = GridField4D(f"{original.name}_error_{label}", original.units, original.times[:1],
                            original.pressures[:1], original.lats, original.lons, arr[None, None])
            store_field(m, f"{args.maps}_{label}.nngf")
    return EXIT_OK


def cmd_ablate(args) -> int:
    field = load_field(args.input)
    try:
        mcfg, tcfg = load_configs(args.config, seed=args.seed, workers=args.workers)
        rows = resolve_rows(args.rows)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    results = run_ablation(field, mcfg, tcfg, rows)
    text = format_report(results)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec.load(args.spec)
    except (kvtext.KVError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid synth spec: {exc}") from None
    field = synth_field(spec, args.seed)
    store_field(field, args.output)
    _emit({"shape": list(field.shape), "output": args.output})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nncompress", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1, help="worker threads (1 = bit-exact reference mode)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="train a network on a field and write the artifact", parents=[common])
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="evaluate an artifact on its native or a custom grid", parents=[common])
    p.add_argument("artifact")
    p.add_argument("output")
    p.add_argument("--grid", default=None, help="grid file or refinement like lon=2,lat=2")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("stats", help="error statistics of an artifact against the original field", parents=[common])
    p.add_argument("artifact")
    p.add_argument("original")
    p.add_argument("--quantile", type=float, default=0.99999)
    p.add_argument("--hist", default=None, help="write histogram edges/counts as key=value text")
    p.add_argument("--maps", default=None, help="prefix for per-location mean/std field files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("ablate", help="train toggle variants and write a WRMSE table", parents=[common])
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", required=True)
    p.add_argument("--rows", default=None, help="table rows 1-11 and/or names such as full,no_fourier")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic band-limited field", parents=[common])
    p.add_argument("spec")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, QuantizationOverflow, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FieldFormatError, ArtifactError, OutOfDomainError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
