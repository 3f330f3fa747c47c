"""Command-line entry point: ``rcindex <subcommand> [options]``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
Errors are reported on stderr as a single JSON object.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, panel, stages
from .errors import RCIndexError, ValidationError
from .synth import generate_synthetic_panel, reference_spec

BUNDLED_SEED = 7


def _add_common(p):
    p.add_argument("--out-dir", default="out", help="directory for outputs (default: out)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    p.add_argument("--quiet", action="store_true")


def _work(p):
    p.add_argument("--work-dir", default=None,
                   help="directory holding earlier stage outputs (default: --out-dir)")


def build_parser():
    parser = argparse.ArgumentParser(prog="rcindex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rcindex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic panel and the default dictionary")
    _add_common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--countries", type=int, default=172)
    p.add_argument("--years", type=int, default=9)
    p.add_argument("--first-year", type=int, default=2013)

    p = sub.add_parser("ingest", help="validate, impute, collapse and transform a panel CSV")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dict", dest="dictionary", default=None)
    p.add_argument("--year-from", type=int, default=None)
    p.add_argument("--year-to", type=int, default=None)
    p.add_argument("--exclude-incomplete", action="store_true",
                   help="exclude (and report) countries with no data for a country-mean variable")

    for name, helptext in (("describe", "descriptive statistics and correlation matrix"),
                           ("adequacy", "KMO and Bartlett tests")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _work(p)

    p = sub.add_parser("efa", help="principal-axis factoring with varimax rotation")
    _add_common(p)
    _work(p)
    p.add_argument("--factors", type=int, default=2)
    p.add_argument("--no-kaiser", action="store_true", help="disable Kaiser row normalization")

    p = sub.add_parser("reliability", help="alpha and lambda-6 per factor item set")
    _add_common(p)
    _work(p)
    p.add_argument("--items", default=None, help="comma-separated explicit item list")

    p = sub.add_parser("index", help="factor-score and summative index scores")
    _add_common(p)
    _work(p)

    p = sub.add_parser("rank", help="rankings CSV and rank-strip SVGs")
    _add_common(p)
    _work(p)

    p = sub.add_parser("regress", help="hierarchical Bayesian regression of the outcome on the indexes")
    _add_common(p)
    _work(p)
    _regress_args(p)
    p.add_argument("--model", choices=("cross", "panel"), default="cross")
    p.add_argument("--predictors", choices=("factor_scores", "summative"), default=None)
    p.add_argument("--draws", action="store_true", help="also write raw draws as CSV")

    p = sub.add_parser("pipeline", help="run every stage in order and write a manifest")
    _add_common(p)
    p.add_argument("--data", default=None, help="panel CSV (default: bundled synthetic dataset)")
    p.add_argument("--dict", dest="dictionary", default=None)
    p.add_argument("--factors", type=int, default=2)
    p.add_argument("--year-from", type=int, default=None)
    p.add_argument("--year-to", type=int, default=None)
    p.add_argument("--exclude-incomplete", action="store_true")
    p.add_argument("--no-kaiser", action="store_true")
    _regress_args(p)
    return parser


def _regress_args(p):
    p.add_argument("--threshold", type=int, default=50)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)


def bundled_dataset():
    return panel.default_dictionary_path().parent / "synthetic_panel.csv"


def write_synthetic(out_dir, seed, countries, years, first_year=2013):
    spec = reference_spec(first_year=first_year, zero_country_rate=0.1, cell_missing_rate=0.05)
    pnl = generate_synthetic_panel(seed, countries, years, spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = panel.load_dictionary()
    data_path = out / "synthetic_panel.csv"
    panel.write_panel_csv(pnl, data_path, specs)
    dict_path = out / "dictionary.json"
    dict_path.write_text(panel.default_dictionary_path().read_text(encoding="utf-8"), encoding="utf-8")
    return [data_path, dict_path]


def _work_dir(args):
    return Path(getattr(args, "work_dir", None) or args.out_dir)


def run_stage(args):
    work = _work_dir(args)
    cmd = args.command
    if cmd == "synth":
        return write_synthetic(args.out_dir, args.seed, args.countries, args.years, args.first_year)
    if cmd == "ingest":
        return stages.ingest(args.data, args.dictionary, args.out_dir, args.year_from, args.year_to,
                             args.exclude_incomplete)
    if cmd == "describe":
        return stages.describe(work / stages.CROSS_SECTION, args.out_dir, args.fmt)
    if cmd == "adequacy":
        return stages.adequacy(work / stages.CROSS_SECTION, work / stages.DICTIONARY, args.out_dir)
    if cmd == "efa":
        return stages.efa(work / stages.CROSS_SECTION, work / stages.DICTIONARY, args.out_dir,
                          args.factors, not args.no_kaiser, args.fmt)
    if cmd == "reliability":
        items = [s.strip() for s in args.items.split(",")] if args.items else None
        return stages.reliability_stage(work / stages.CROSS_SECTION, args.out_dir,
                                        None if items else work / stages.EFA_MODEL, items)
    if cmd == "index":
        return stages.index_stage(work / stages.CROSS_SECTION, work / stages.EFA_MODEL, args.out_dir)
    if cmd == "rank":
        return stages.rank_stage(work / stages.INDEX_SCORES, args.out_dir, args.fmt)
    if cmd == "regress":
        return stages.regress(work, args.out_dir, args.model, args.threshold, args.chains, args.iters,
                              args.warmup, args.seed, args.predictors, args.draws, args.workers)
    raise ValidationError(f"unknown command {cmd!r}")


def run_pipeline(args):
    """All stages in order: ingest, describe, adequacy, efa, reliability, index, rank, regress."""
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = Path(args.data) if args.data else bundled_dataset()
    dictionary = Path(args.dictionary) if args.dictionary else panel.default_dictionary_path()

    steps = [
        ("ingest", lambda: stages.ingest(data, dictionary, out, args.year_from, args.year_to,
                                         args.exclude_incomplete)),
        ("describe", lambda: stages.describe(out / stages.CROSS_SECTION, out, args.fmt)),
        ("adequacy", lambda: stages.adequacy(out / stages.CROSS_SECTION, out / stages.DICTIONARY, out)),
        ("efa", lambda: stages.efa(out / stages.CROSS_SECTION, out / stages.DICTIONARY, out,
                                   args.factors, not args.no_kaiser, args.fmt)),
        ("reliability", lambda: stages.reliability_stage(out / stages.CROSS_SECTION, out, out / stages.EFA_MODEL)),
        ("index", lambda: stages.index_stage(out / stages.CROSS_SECTION, out / stages.EFA_MODEL, out)),
        ("rank", lambda: stages.rank_stage(out / stages.INDEX_SCORES, out, args.fmt)),
        ("regress_cross", lambda: stages.regress(out, out, "cross", args.threshold, args.chains, args.iters,
                                                 args.warmup, args.seed, workers=args.workers)),
        ("regress_panel", lambda: stages.regress(out, out, "panel", args.threshold, args.chains, args.iters,
                                                 args.warmup, args.seed, workers=args.workers)),
    ]
    manifest = {
        "command": "pipeline",
        "tool_version": __version__,
        "inputs": {data.name: stages.sha256(data)},
        "dictionary": {dictionary.name: stages.sha256(dictionary)},
        "parameters": {
            "factors": args.factors, "kaiser_normalization": not args.no_kaiser,
            "year_from": args.year_from, "year_to": args.year_to, "threshold": args.threshold,
            "chains": args.chains, "iterations": args.iters, "warmup": args.warmup, "format": args.fmt,
            "exclude_incomplete": args.exclude_incomplete,
        },
        "seed": args.seed,
        "stages": [],
    }
    all_written = []
    for name, step in steps:
        start = time.perf_counter()
        written = step()
        elapsed = time.perf_counter() - start
        manifest["stages"].append({
            "stage": name,
            "outputs": [{"path": Path(p).relative_to(out).as_posix(), "sha256": stages.sha256(p)} for p in written],
            "seconds": round(elapsed, 3),
        })
        all_written.extend(written)
    stages.write_json(out / "manifest.json", manifest)
    return [*all_written, out / "manifest.json"]


def _error(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are validation errors here
        return 0 if exc.code == 0 else 1
    try:
        written = run_pipeline(args) if args.command == "pipeline" else run_stage(args)
    except RCIndexError as exc:
        return _error(exc, exc.exit_code)
    except OSError as exc:
        return _error(exc, 3)
    if not args.quiet:
        for p in written:
            print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
