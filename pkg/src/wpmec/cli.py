"""Command-line front end.

    wpmec solve    --input inst.json [--method admm|optimal|offload-only|local-only]
    wpmec exact    --input inst.json
    wpmec baseline --input inst.json [--method offload-only|local-only]
    wpmec sweep    --spec scenario.json --out result.csv [--format csv|json]

Exit status is 0 on success, 2 for usage errors (bad flags, malformed or
out-of-range input, enumeration over its cap) and 1 for solver or I/O
failures.  Output files are written atomically, so a failed run never
leaves a partial file behind.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

from . import __version__
from .admm import AdmmConfig, run, with_overrides
from .errors import CapacityError, InvalidInputError
from .exact import ENUMERATION_CAP, enumerate_optimal, local_only, offloading_only
from .experiments import load_spec, run_sweep, write_results
from .model import load_instance

log = logging.getLogger("wpmec")

METHODS = ("admm", "optimal", "offload-only", "local-only")
TRACE_COLUMNS = ("iter", "primal_residual", "coupling_change", "objective", "modes")


class UsageError(Exception):
    pass


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $WPMEC_WORKERS or 1)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (solve: stdout as JSON when set to json)")
    common.add_argument("--out", help="write the result to this file")

    admm = argparse.ArgumentParser(add_help=False)
    g = admm.add_argument_group("ADMM settings")
    g.add_argument("--c", type=float, help="penalty / step size")
    g.add_argument("--sigma1-coeff", type=float, help="stopping tolerance per device")
    g.add_argument("--max-iter", type=int)
    g.add_argument("--init-a", type=float)
    g.add_argument("--init-multiplier", type=float)
    g.add_argument("--subproblem-tol", type=float)
    g.add_argument("--no-polish", action="store_true", help="report the raw ADMM iterate")
    g.add_argument("--trace", help="write the per-iteration trace as CSV")

    p = argparse.ArgumentParser(prog="wpmec", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("solve", parents=[common, admm], help="solve one instance")
    s.add_argument("--input", required=True, help="instance JSON")
    s.add_argument("--method", choices=METHODS, default="admm")

    e = sub.add_parser("exact", parents=[common], help="enumerate all mode sets")
    e.add_argument("--input", required=True, help="instance JSON")
    e.add_argument("--cap", type=int, default=ENUMERATION_CAP, help="largest N to enumerate")

    b = sub.add_parser("baseline", parents=[common], help="offload-only / local-only")
    b.add_argument("--input", required=True, help="instance JSON")
    b.add_argument("--method", choices=("offload-only", "local-only"), default=None,
                   help="default: both")

    w = sub.add_parser("sweep", parents=[common, admm], help="run a scenario sweep")
    w.add_argument("--spec", required=True, help="scenario JSON")
    return p


def _config(args):
    kw = dict(c=args.c, sigma1_coeff=args.sigma1_coeff, max_iter=args.max_iter,
              init_a=args.init_a, init_multiplier=args.init_multiplier,
              subproblem_tol=args.subproblem_tol)
    if args.no_polish:
        kw["polish"] = False
    return with_overrides(AdmmConfig(), **kw)


def _atomic_write(path, text):
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".wpmec-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _render_text(rep):
    lines = [
        f"method:     {rep.method}",
        f"objective:  {rep.objective!r} bits/s",
        f"modes:      {rep.mode_bits}",
        f"a:          {rep.allocation.a!r}",
        "tau:        " + " ".join(repr(float(t)) for t in rep.allocation.tau),
        f"iterations: {rep.iterations}",
        f"converged:  {str(rep.converged).lower()}",
    ]
    return "\n".join(lines) + "\n"


def _render_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "objective", "modes", "a", "tau", "iterations", "converged"))
    for rep in reports:
        w.writerow((rep.method, repr(rep.objective), rep.mode_bits, repr(rep.allocation.a),
                    ";".join(repr(float(t)) for t in rep.allocation.tau), rep.iterations,
                    str(rep.converged).lower()))
    return buf.getvalue()


def _render_trace(rep):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rep.trace:
        w.writerow((r.iter, repr(r.primal_residual), repr(r.coupling_change),
                    repr(r.objective), r.modes))
    return buf.getvalue()


def _emit(args, reports):
    fmt = args.format or "text"
    if fmt == "json":
        docs = [r.to_dict() for r in reports]
        text = json.dumps(docs[0] if len(docs) == 1 else docs, indent=2) + "\n"
    elif fmt == "csv":
        text = _render_csv(reports)
    else:
        text = "\n".join(_render_text(r) for r in reports)
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _solve_one(inst, method, args, cfg=None):
    if method == "admm":
        return run(inst, cfg)
    if method == "optimal":
        cap = getattr(args, "cap", ENUMERATION_CAP)
        if inst.N > cap:
            raise UsageError(f"--method optimal: N = {inst.N} exceeds the enumeration cap "
                             f"of {cap} devices")
        return enumerate_optimal(inst, cap=cap, workers=args.workers)
    return offloading_only(inst) if method == "offload-only" else local_only(inst)


def _cmd_solve(args):
    if args.trace and args.method != "admm":
        raise UsageError("--trace is only available with --method admm")
    inst = load_instance(args.input)
    rep = _solve_one(inst, args.method, args, _config(args))
    log.info("%s finished after %d iterations", rep.method, rep.iterations)
    _emit(args, [rep])
    if args.trace:
        _atomic_write(args.trace, _render_trace(rep))


def _cmd_exact(args):
    inst = load_instance(args.input)
    _emit(args, [_solve_one(inst, "optimal", args)])


def _cmd_baseline(args):
    inst = load_instance(args.input)
    methods = [args.method] if args.method else ["offload-only", "local-only"]
    _emit(args, [_solve_one(inst, m, args) for m in methods])


def _cmd_sweep(args):
    if not args.out:
        raise UsageError("sweep: --out is required")
    if args.trace:
        raise UsageError("sweep: --trace is only available for solve")
    spec = load_spec(args.spec)
    result = run_sweep(spec, _config(args), workers=args.workers)
    folder = os.path.dirname(os.path.abspath(args.out))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".wpmec-", suffix=".tmp")
    os.close(fd)
    try:
        write_results(result, tmp, args.format or "csv")
        os.replace(tmp, args.out)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    print(f"wrote {len(result.values)} rows to {args.out}")


COMMANDS = {"solve": _cmd_solve, "exact": _cmd_exact, "baseline": _cmd_baseline,
            "sweep": _cmd_sweep}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="wpmec: %(message)s", stream=sys.stderr)
    if args.workers is not None and args.workers < 1:
        print("wpmec: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.verb](args)
    except (UsageError, InvalidInputError, CapacityError) as exc:
        print(f"wpmec: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wpmec: I/O error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver failures
        print(f"wpmec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
