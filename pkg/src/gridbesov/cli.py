"""Command-line front end: grids, norms, decompositions, exotic reports, presets.

Every report is canonical JSON (sorted keys, rationals as "num/den") so that
identical invocations give byte-identical files.  Exit codes: 0 success,
2 validation or parameter failure, 3 resource guard.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

from . import __version__
from .decompose import (
    AhlforsSetSpec,
    IntervalQuery,
    atom_transfer,
    cantor_complement_decomposition,
    indicator_decomposition,
    interval_partition_families,
    parse_grid_token,
)
from .errors import GuardError, ParameterError
from .exact import format_exact, format_rational, parse_rational, to_mpf
from .exotic import (
    bilipschitz_diagnostic,
    build_exotic_function,
    exotic_norm_report,
    extremal_words,
    jstar_profile,
    select_exotic_families,
)
from .grid_core import (
    DEFAULT_DEPTH_LIMIT,
    CellAddress,
    NAdicGrid,
    build_nadic,
    build_weighted_binary,
    grid_from_json,
    grid_from_spec,
    grid_to_json,
    regroup_bins,
    regroup_by_measure,
    validate_good_grid,
)
from .norms import AtomicRep, BesovParams, norm_report, rep_norm, rep_to_function
from .stepfun import RNG_ALGORITHM, seeded_corpus, stepfun_from_json

DEFAULT_SEED = 20240611
EXOTIC_DEPTH_LIMIT = 16384


# output -------------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit(report: dict, args, csv_rows: tuple[list[str], list[list]] | None = None) -> None:
    text = canonical_json(report)
    if getattr(args, "out", None):
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    if csv_rows is not None and getattr(args, "csv", None):
        write_atomic(args.csv, csv_text(*csv_rows))


# grid ---------------------------------------------------------------------------

def _grid_from_flags(args, depth_limit: int | None = None):
    if args.nadic is not None:
        return build_nadic(args.nadic, args.depth, depth_limit)
    if args.weighted is not None:
        return build_weighted_binary(parse_rational(args.weighted), args.depth, depth_limit)
    if getattr(args, "input", None):
        with open(args.input, encoding="utf-8") as fh:
            return grid_from_json(json.load(fh), depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
    raise ParameterError("choose --nadic N, --weighted a or --input FILE")


def _ratio_rows(meta) -> list[dict]:
    return [{"level": k, "ratio": format_rational(hi / lo)} for k, (hi, lo) in enumerate(meta.level_stats)]


def cmd_grid(args) -> int:
    grid = _grid_from_flags(args)
    report: dict = {"command": f"grid {args.action}", "generator": grid.generator_spec(), "depth": args.depth}
    rows: list[list] = []
    if args.action == "export":
        emit(grid_to_json(grid, args.depth), args)
        return 0
    if args.regroup:
        regrouped = regroup_by_measure(grid, args.depth, args.stride)
        bins = regroup_bins(grid, args.depth, 1)
        report["regroup"] = {
            "stride": regrouped.stride,
            "levels": regrouped.depth_limit,
            "literal_bins": [
                {"level": k, "cells": len(b),
                 "ratio": format_rational(max(c.measure for c in b) / min(c.measure for c in b))}
                for k, b in enumerate(bins)],
        }
        if args.check or args.action == "check":
            meta = validate_good_grid(regrouped, regrouped.depth_limit)
            report["regroup"]["meta"] = meta.to_json()
            report["regroup"]["max_ratio"] = format_rational(max(hi / lo for hi, lo in meta.level_stats))
            rows = [[r["level"], r["ratio"]] for r in _ratio_rows(meta)]
    if (args.check or args.action == "check") and not args.regroup:
        meta = validate_good_grid(grid, args.depth)
        report["meta"] = meta.to_json()
        report["valid"] = True
        rows = [[r["level"], r["ratio"]] for r in _ratio_rows(meta)]
    elif args.regroup and (args.check or args.action == "check"):
        report["valid"] = True
    if args.write_grid:
        write_atomic(args.write_grid, canonical_json(grid_to_json(grid, args.depth)))
    emit(report, args, (["level", "max_over_min"], rows))
    return 0


# norm ---------------------------------------------------------------------------

def load_function(path: str):
    """StepFunction or AtomicRep JSON with a "grid" generator spec."""
    if path == "sample":
        text = resources.files("gridbesov").joinpath("data/sample_function.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    obj = json.loads(text)
    grid = grid_from_spec(obj.get("grid", {"kind": "nadic", "N": 2}), obj.get("cells"),
                          depth_limit=int(obj.get("depth_limit", DEFAULT_DEPTH_LIMIT)))
    if "coeffs" in obj:
        rep = AtomicRep(grid, {CellAddress(c["address"]): parse_rational(c["value"]) for c in obj["coeffs"]})
        return grid, rep
    return grid, stepfun_from_json(obj, grid)


def cmd_norm(args) -> int:
    params = BesovParams.parse(args.params)
    grid, obj = load_function(args.input)
    methods = ["rep", "martingale", "osc", "haar"] if args.method == "all" else [args.method]
    results = {}
    if isinstance(obj, AtomicRep):
        f = rep_to_function(obj, params)
        if "rep" in methods:
            results["rep"] = rep_norm(obj, params)
            methods.remove("rep")
    else:
        f = obj
    results.update(norm_report(f, params, methods, include_level0=not args.no_level0))
    report = {
        "command": "norm",
        "params": params.to_json(),
        "level0_term": not args.no_level0,
        "pieces": len(f.pieces),
        "results": {m: r.to_json() for m, r in sorted(results.items())},
    }
    rows = [[m, k, format_exact(to_mpf(v))] for m, r in sorted(results.items()) for k, v in r.per_level]
    emit(report, args, (["method", "level", "term"], rows))
    return 0


# decompose ----------------------------------------------------------------------

def _parse_cell(text: str | None) -> CellAddress:
    if not text:
        return CellAddress()
    return CellAddress([int(t) for t in text.split(",") if t.strip() != ""])


def cmd_decompose(args) -> int:
    params = BesovParams.parse(args.params)
    report: dict = {"command": f"decompose {args.action}", "params": params.to_json()}
    rows: list[list] = []
    if args.action == "indicator":
        grid = parse_grid_token(args.grid, depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
        q = IntervalQuery.parse(args.interval)
        d = indicator_decomposition(grid, q, params, args.depth)
        report.update(d.to_json())
        report["residual_bound"] = format_rational(Fraction(1, 2 ** (args.depth - 1)))
        rows = [[k, format_exact(to_mpf(v))] for k, v in sorted(d.level_sums.items())]
    elif args.action == "cantor":
        grid = NAdicGrid(3, depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
        rep = cantor_complement_decomposition(grid, AhlforsSetSpec(), _parse_cell(args.cell), args.depth)
        report.update(rep.to_json())
        report["all_sums_equal_half_of_Q"] = all(r == Fraction(1, 2) for r in rep.ratios.values())
        rows = [[k, rep.counts[k], format_rational(rep.level_sums[k])] for k in sorted(rep.level_sums)]
    elif args.action == "transfer":
        src = parse_grid_token(args.src, depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
        dst = parse_grid_token(args.dst, depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
        cell = src.cell(_parse_cell(args.cell))
        d = atom_transfer(src, dst, cell, params, args.depth)
        report.update(d.to_json())
        report["source_cell"] = {"address": list(cell.address.word), "a": format_rational(cell.a),
                                 "b": format_rational(cell.b)}
        report["reconstruction_residual"] = format_rational(d.residual)
        report["rep_norm"] = rep_norm(d.rep, params).to_json()
        rows = [[k, format_exact(to_mpf(v))] for k, v in sorted(d.level_sums.items())]
    else:  # families
        grid = parse_grid_token(args.grid, depth_limit=max(args.depth, DEFAULT_DEPTH_LIMIT))
        ladder = interval_partition_families(grid, IntervalQuery.parse(args.interval), args.steps)
        report["families"] = ladder.to_json()
        rows = [[k, len(v)] for k, v in sorted(ladder.families.items())]
    emit(report, args, (["level", "value"] if args.action != "cantor" else ["level", "count", "sum"], rows))
    return 0


# exotic -------------------------------------------------------------------------

def _exotic_grids(args):
    return (parse_grid_token(args.src, depth_limit=args.depth_limit),
            parse_grid_token(args.dst, depth_limit=args.depth_limit))


def _exotic_params(args) -> BesovParams:
    return BesovParams.make(parse_rational(args.s), parse_rational(args.p), parse_rational(args.q))


def cmd_exotic(args) -> int:
    grid_o, grid_s = _exotic_grids(args)
    report: dict = {"command": f"exotic {args.action}", "circle": args.src, "star": args.dst}
    rows: list[list] = []
    header: list[str] = []
    if args.action == "profile":
        prof = jstar_profile(grid_o, grid_s, args.k)
        report["profile"] = {"level": prof.level, "spread": prof.spread, "min": prof.minimum,
                             "max": prof.maximum,
                             "multiset": {str(k): v for k, v in sorted(prof.multiset.items())}}
        report["extremal"] = jstar_profile(grid_o, grid_s, args.k, extremal_words(args.k)).to_json()
        if args.kmax:
            report["diagnostic"] = bilipschitz_diagnostic(grid_o, grid_s, args.kmax)
        header = ["cell", "jstar"]
        rows = [["".join(map(str, c.word)), v] for c, v in zip(prof.cells, prof.values)]
        emit(report, args, (header, rows))
        return 0
    params = _exotic_params(args)
    sel = select_exotic_families(grid_o, grid_s, params, sep=args.sep, n_max=args.nmax)
    report["selection"] = sel.to_json()
    report["verified"] = sel.verify()
    header = ["n", "i", "jstar", "circle_level"]
    rows = [[r.n, i, j, r.v] for r in sel.rows for i, j in enumerate(r.jstars, start=1)]
    if args.action in ("build", "report"):
        fn = build_exotic_function(sel, params)
        report["function"] = {
            "mode": fn.mode, "pairs": len(fn.entries), "pieces": len(fn.stepfun.pieces),
            "max_piece_level": fn.stepfun.depth,
            "entries": [{"n": e.n, "i": e.i, "parent_level": e.parent.level,
                         "coefficient": format_exact(e.coefficient)} for e in fn.entries],
        }
        if args.function_out:
            obj = fn.stepfun.to_json()
            obj["grid"] = fn.grid.generator_spec()
            obj["depth_limit"] = args.depth_limit
            write_atomic(args.function_out, canonical_json(obj))
        if args.action == "report":
            report["norms"] = exotic_norm_report(fn, sel, params, transfer_nmax=args.transfer_nmax)
    emit(report, args, (header, rows))
    return 0


# presets ------------------------------------------------------------------------

@dataclass
class ExperimentPreset:
    name: str
    description: str
    argv: list[list[str]] = field(default_factory=list)  # one CLI call per entry, outputs named by index


PRESETS = {
    "grids": ExperimentPreset("grids", "validate the dyadic and weighted 1/5 grids and the regrouping", [
        ["grid", "build", "--nadic", "2", "--depth", "12", "--check"],
        ["grid", "build", "--weighted", "1/5", "--depth", "12", "--check"],
        ["grid", "build", "--weighted", "1/5", "--depth", "12", "--regroup", "--check"],
    ]),
    "decompose": ExperimentPreset("decompose", "indicator, Cantor and transfer decompositions", [
        ["decompose", "indicator", "--interval", "1/3,3/4", "--depth", "24"],
        ["decompose", "cantor", "--depth", "12"],
        ["decompose", "transfer", "--from", "weighted:1/5", "--to", "nadic:2", "--cell", "0,1", "--depth", "20"],
    ]),
    "exotic": ExperimentPreset("exotic", "profiles and the p > q counterexample report", [
        ["exotic", "profile", "--k", "10", "--kmax", "20"],
        ["exotic", "report", "--p", "2", "--q", "1", "--s", "1/5", "--nmax", "3"],
    ]),
}


def corpus_report(seed: int, count: int, params: BesovParams) -> dict:
    """Norm ratios over the seeded corpus (martingale against osc and rep)."""
    grid = NAdicGrid(2)
    lo_o = hi_o = lo_r = hi_r = None
    for f in seeded_corpus(grid, count=count, seed=seed):
        r = norm_report(f, params, ("rep", "martingale", "osc"))
        m = r["martingale"].value
        a, b = m / r["osc"].value, m / r["rep"].value
        lo_o = a if lo_o is None else min(lo_o, a)
        hi_o = a if hi_o is None else max(hi_o, a)
        lo_r = b if lo_r is None else min(lo_r, b)
        hi_r = b if hi_r is None else max(hi_r, b)
    return {"seed": seed, "count": count, "rng": RNG_ALGORITHM, "params": params.to_json(),
            "martingale_over_osc": [format_exact(lo_o), format_exact(hi_o)],
            "martingale_over_rep": [format_exact(lo_r), format_exact(hi_r)]}


def cmd_preset(args) -> int:
    if args.action == "list" or args.name is None:
        sys.stdout.write(canonical_json({n: {"description": p.description, "calls": p.argv}
                                         for n, p in sorted(PRESETS.items())} | {
            "corpus": {"description": "norm ratios over the seeded corpus", "calls": []}}))
        return 0
    outdir = args.outdir
    if args.name == "corpus":
        rep = corpus_report(args.seed, args.count, BesovParams.parse(args.params))
        write_atomic(os.path.join(outdir, "corpus.json"), canonical_json(rep))
        return 0
    if args.name not in PRESETS:
        raise ParameterError(f"unknown preset {args.name!r}")
    for i, argv in enumerate(PRESETS[args.name].argv):
        code = main(argv + ["--out", os.path.join(outdir, f"{args.name}-{i:02d}.json")])
        if code != 0:
            return code
    return 0


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridbesov", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def outputs(p):
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--csv", help="write per-level plot data as CSV")

    g = sub.add_parser("grid", help="build, check or export grids")
    g.add_argument("action", choices=["build", "check", "export"])
    src = g.add_mutually_exclusive_group()
    src.add_argument("--nadic", type=int)
    src.add_argument("--weighted")
    src.add_argument("--input", help="grid interchange JSON")
    g.add_argument("--depth", type=int, default=10)
    g.add_argument("--regroup", action="store_true")
    g.add_argument("--stride", type=int, default=None)
    g.add_argument("--check", action="store_true")
    g.add_argument("--write-grid", help="also write the interchange JSON")
    outputs(g)
    g.set_defaults(func=cmd_grid)

    n = sub.add_parser("norm", help="norms of a step function or atomic representation")
    n.add_argument("--method", choices=["rep", "martingale", "osc", "haar", "all"], default="all")
    n.add_argument("--params", default="s=1/4,p=2,q=2")
    n.add_argument("--input", default="sample", help="function JSON, or 'sample' for the bundled one")
    n.add_argument("--no-level0", action="store_true", help="drop the level-0 term")
    outputs(n)
    n.set_defaults(func=cmd_norm)

    d = sub.add_parser("decompose", help="indicator, Cantor, transfer and family decompositions")
    d.add_argument("action", choices=["indicator", "cantor", "transfer", "families"])
    d.add_argument("--grid", default="nadic:2")
    d.add_argument("--interval", default="1/3,3/4")
    d.add_argument("--depth", type=int, default=24)
    d.add_argument("--cell", default="")
    d.add_argument("--from", dest="src", default="weighted:1/5")
    d.add_argument("--to", dest="dst", default="nadic:2")
    d.add_argument("--steps", type=int, default=12)
    d.add_argument("--params", default="s=1/4,p=2,q=2")
    outputs(d)
    d.set_defaults(func=cmd_decompose)

    e = sub.add_parser("exotic", help="j*0 profiles and the counterexample")
    e.add_argument("action", choices=["profile", "select", "build", "report"])
    e.add_argument("--from", dest="src", default="weighted:1/5", help="circle grid")
    e.add_argument("--to", dest="dst", default="nadic:2", help="star grid")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--kmax", type=int, default=0)
    e.add_argument("--p", default="2")
    e.add_argument("--q", default="1")
    e.add_argument("--s", default="1/5")
    e.add_argument("--sep", type=int, default=4)
    e.add_argument("--nmax", type=int, default=3)
    e.add_argument("--transfer-nmax", type=int, default=2)
    e.add_argument("--depth-limit", type=int, default=EXOTIC_DEPTH_LIMIT)
    e.add_argument("--function-out", help="write the counterexample step function JSON")
    outputs(e)
    e.set_defaults(func=cmd_exotic)

    p = sub.add_parser("preset", help="run a named experiment preset")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("name", nargs="?")
    p.add_argument("--outdir", default="reports")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--params", default="s=1/4,p=2,q=2")
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except GuardError as exc:
        sys.stdout.write(canonical_json({"error": {"type": type(exc).__name__, "message": str(exc),
                                                   "kind": "resource-guard"}}))
        return 3
    except (ValueError, ZeroDivisionError) as exc:
        sys.stdout.write(canonical_json({"error": {"type": type(exc).__name__, "message": str(exc),
                                                   "kind": "validation"}}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
