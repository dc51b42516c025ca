"""``homvar`` command line.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 validation
failure (the violated invariant is named on stderr), 5 verification suite
failure, 6 non-convergence.
"""

import argparse
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, harness
from .action import MODES, ConstraintSet, QuadratureBox, evaluation_report, write_profile_csv
from .dirac import ShellGrid, build_dirac_sea
from .errors import HomvarError, NotConvergedError, UnboundedSequenceError, ValidationError
from .krein import SignatureSpace, spectral_weight
from .measure import extract_convergent_subsequence, measure_from_json, measure_to_json
from .optimize import FactorParameterization, load_config, minimize, write_history_csv
from .parallel import worker_count

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_VALIDATION, EXIT_SUITE, EXIT_NOT_CONVERGED = 0, 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


# argument types -----------------------------------------------------------------

def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"must be non-negative and finite, got {text}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _four(conv):
    def parse(text):
        parts = text.split(",")
        if len(parts) != 4:
            raise argparse.ArgumentTypeError(f"expected four comma-separated values, got {text!r}")
        return tuple(conv(p) for p in parts)
    return parse


# paths and atomic output ------------------------------------------------------

def _check_input(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_IO, f"input file not found: {p}")
    if not os.access(p, os.R_OK):
        raise CliError(EXIT_IO, f"input file not readable: {p}")
    return p


def _check_output(path):
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if p.is_dir():
        raise CliError(EXIT_IO, f"output path is a directory: {p}")
    if not parent.is_dir():
        raise CliError(EXIT_IO, f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK) or (p.exists() and not os.access(p, os.W_OK)):
        raise CliError(EXIT_IO, f"output path not writable: {p}")
    return p


def write_atomic(path, text):
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def measure_document(nu, meta=None):
    doc = measure_to_json(nu)
    if meta is not None:
        doc["meta"] = meta
    return doc


def read_measure(path):
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("json", f"{path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError("schema", f"{path}: top level must be an object")
    return measure_from_json(obj)


def _summary(nu):
    total = nu.total()
    trace = complex(total.trace())
    straceS = float(-(nu.space.signs * total.diagonal()).sum().real)
    return trace.real, straceS, spectral_weight(total)


# commands -------------------------------------------------------------------

def cmd_dirac_sea(args, out):
    dest = _check_output(args.out)
    try:
        grid = ShellGrid(args.mass, args.kmax, args.nk, args.two_pi_normalization, args.cell_volume)
    except ValueError as exc:
        raise CliError(EXIT_ARGS, str(exc)) from None
    nu = build_dirac_sea(grid)
    meta = {
        "command": "dirac-sea",
        "mass": args.mass, "kmax": args.kmax, "nk": args.nk,
        "two_pi_normalization": args.two_pi_normalization,
        "cell_volume": grid.volume,
    }
    write_atomic(dest, _dump(measure_document(nu, meta)))
    trace, straceS, sweight = _summary(nu)
    print(f"atoms {len(nu)}", file=out)
    print(f"trace {trace!r}", file=out)
    print(f"straceS {straceS!r}", file=out)
    print(f"sweight {sweight!r}", file=out)
    return EXIT_OK


def _constraints_from_args(args):
    if args.c is None:
        if args.f is not None or args.C is not None or args.mode is not None:
            raise CliError(EXIT_ARGS, "--mode/--f/--C need --c")
        return None
    try:
        return ConstraintSet(args.c, args.mode or "trace+f", args.f, args.C)
    except ValueError as exc:
        raise CliError(EXIT_ARGS, str(exc)) from None


def cmd_evaluate(args, out):
    src = _check_input(args.measure)
    dest = _check_output(args.out) if args.out else None
    profile = _check_output(args.profile_csv) if args.profile_csv else None
    if profile is not None and args.profile_axis is None:
        raise CliError(EXIT_ARGS, "--profile-csv needs --profile-axis")
    cs = _constraints_from_args(args)
    try:
        box = QuadratureBox(args.box, args.grid)
    except ValueError as exc:
        raise CliError(EXIT_ARGS, str(exc)) from None

    nu = read_measure(src)
    report = evaluation_report(nu, box, cs)
    report["inputs"]["measure_path"] = str(src)
    o = report["outputs"]
    for key in ("S", "S_per_volume", "T", "trace", "straceS", "sweight"):
        print(f"{key} {o[key]!r}", file=out)
    for key, v in o.get("residuals", {}).items():
        print(f"residual_{key} {v!r}", file=out)
    if dest is not None:
        write_atomic(dest, _dump(report))
    if profile is not None:
        buf = io.StringIO()
        write_profile_csv(buf, nu, args.profile_axis, box.half_widths[args.profile_axis], args.profile_points)
        write_atomic(profile, buf.getvalue())
    return EXIT_OK


def cmd_minimize(args, out):
    cfg_path = _check_input(args.config)
    cfg, extras = load_config(cfg_path)
    if args.max_iterations is not None:
        cfg = replace(cfg, max_iterations=args.max_iterations)
    dest = _check_output(args.out or extras.get("output", cfg_path.parent / "minimized.json"))
    hist = _check_output(args.history or extras.get("history", cfg_path.parent / "history.csv"))
    if "initial" in extras:
        initial = read_measure(_check_input(extras["initial"]))
    else:
        rng = np.random.default_rng(cfg.seed)
        initial = FactorParameterization.random(
            SignatureSpace(extras["n"]), extras["domain"], extras["atoms"], rng, cfg.rank
        )

    res = minimize(initial, cfg)
    report = res.report
    report["run"]["config_path"] = str(cfg_path)
    meta = {"command": "minimize", "run": report["run"], "outputs": report["outputs"]}
    buf = io.StringIO()
    write_history_csv(buf, res.history)
    write_atomic(hist, buf.getvalue())
    write_atomic(dest, _dump(measure_document(res.measure, meta)))
    o = report["outputs"]
    print(f"status {res.status}", file=out)
    print(f"iterations {report['run']['iterations']}", file=out)
    for key in ("S", "T", "trace"):
        print(f"{key} {o[key]!r}", file=out)
    for key, v in o["residuals"].items():
        print(f"residual_{key} {v!r}", file=out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_verify(args, out):
    ids = list(harness.CHECKS) if args.suite == "all" else [args.suite]
    if ids[0] not in harness.CHECKS:
        raise CliError(EXIT_ARGS, f"unknown suite {args.suite!r}; choose 'all' or one of {', '.join(harness.CHECKS)}")
    jl = _check_output(args.out) if args.out else None
    summ = _check_output(args.summary) if args.summary else None
    reports = []
    for lid in ids:
        r = harness.run_suite([lid], seed=args.seed, samples=args.samples)[0]
        reports.append(r)
        flag = "PASS" if r.passed else "FAIL"
        print(f"{flag} {r.lemma_id} samples={r.samples} excluded={r.excluded} "
              f"worst_margin={r.worst_margin:.3e} tol={r.tolerance:.1e} ({r.runtime:.1f}s)", file=out, flush=True)
    if jl is not None:
        buf = io.StringIO()
        harness.write_json_lines(buf, reports)
        write_atomic(jl, buf.getvalue())
    if summ is not None:
        buf = io.StringIO()
        harness.write_summary_csv(buf, reports)
        write_atomic(summ, buf.getvalue())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_SUITE


def cmd_convergence(args, out):
    d = Path(args.sequence_dir)
    if not d.is_dir():
        raise CliError(EXIT_IO, f"sequence directory not found: {d}")
    dest = _check_output(args.out) if args.out else d.parent / f"{d.name}_limit.json"
    if not args.out:
        _check_output(dest)
    files = sorted(d.glob("*.json"))
    if not files:
        raise ValidationError("sequence", f"no *.json files in {d}")
    seq = [read_measure(_check_input(f)) for f in files]
    try:
        sub = extract_convergent_subsequence(seq, args.tol, bound=args.bound)
    except (NotConvergedError, UnboundedSequenceError) as exc:
        print(f"not converged: {exc}", file=out)
        return EXIT_NOT_CONVERGED
    meta = {
        "command": "convergence",
        "sequence_dir": str(d),
        "tol": args.tol,
        "bound": args.bound,
        "files": [f.name for f in files],
        "indices": [int(i) for i in sub.indices],
    }
    write_atomic(dest, _dump(measure_document(sub.limit, meta)))
    print(f"terms {len(seq)}", file=out)
    print(f"subsequence {' '.join(files[i].name for i in sub.indices)}", file=out)
    print(f"limit {dest}", file=out)
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="homvar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dirac-sea", help="discretize the Dirac sea and write the measure")
    d.add_argument("--mass", type=_positive_float, required=True)
    d.add_argument("--kmax", type=_nonneg_float, required=True,
                   help="momentum cutoff; 0 (with --nk 1) gives the single atom at rest")
    d.add_argument("--nk", type=_positive_int, required=True, help="grid cells per spatial axis")
    d.add_argument("--two-pi-normalization", action="store_true", help="include the (2 pi)^-4 prefactor")
    d.add_argument("--cell-volume", type=_positive_float, help="override the momentum cell volume")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dirac_sea)

    e = sub.add_parser("evaluate", help="evaluate S, T and constraint quantities of a measure")
    e.add_argument("--measure", required=True)
    e.add_argument("--box", type=_four(_positive_float), required=True, metavar="R0,R1,R2,R3")
    e.add_argument("--grid", type=_four(_positive_int), required=True, metavar="N0,N1,N2,N3")
    e.add_argument("--out", help="evaluation report JSON")
    e.add_argument("--mode", choices=MODES)
    e.add_argument("--c", type=float, help="trace constraint")
    e.add_argument("--f", type=_positive_float)
    e.add_argument("--C", type=_positive_float)
    e.add_argument("--profile-axis", type=int, choices=range(4))
    e.add_argument("--profile-csv")
    e.add_argument("--profile-points", type=_positive_int, default=101)
    e.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("minimize", help="run the optimizer described by a config file")
    m.add_argument("--config", required=True)
    m.add_argument("--out", help="final measure (overrides 'output' in the config)")
    m.add_argument("--history", help="history CSV (overrides 'history' in the config)")
    m.add_argument("--max-iterations", type=_nonneg_int)
    m.set_defaults(func=cmd_minimize)

    v = sub.add_parser("verify", help="run the empirical check suite")
    v.add_argument("--suite", default="all", help="'all' or a check id")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=_positive_int, help="override per-check sample counts")
    v.add_argument("--out", help="JSON lines report")
    v.add_argument("--summary", help="summary CSV")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convergence", help="extract a convergent subsequence from measure files")
    c.add_argument("--sequence-dir", required=True, help="directory of *.json measures, read in name order")
    c.add_argument("--tol", type=_positive_float, required=True)
    c.add_argument("--bound", type=_positive_float, help="uniform total-variation bound")
    c.add_argument("--out", help="limit measure (default: <dir>_limit.json next to the directory)")
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        worker_count()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"validation failed [{exc.invariant}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except HomvarError as exc:
        print(f"validation failed [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
