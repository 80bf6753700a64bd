"""Command line entry point: ``chemolab {run,check,sweep,steady,construct}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import io
from .config import RunConfig
from .experiments import (EXIT_CHECK_FAILED, EXIT_CODES, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME,
                          EXIT_SCHEMA, evaluate_checks, execute, load_check_spec, sweep)
from .grid import ConfigurationError

log = logging.getLogger("chemolab")


def _fail(code, message):
    print(f"chemolab: {message}", file=sys.stderr)
    return code


def _load(path):
    try:
        return RunConfig.load(path), None
    except ConfigurationError as exc:
        return None, _fail(EXIT_CONFIG, f"configuration error: {exc}")


def _print_metrics(metrics):
    for k, v in metrics.items():
        print(f"{k} = {io.fmt(v) if not isinstance(v, str) else v}")


def _run_kind(args, kind):
    cfg, err = _load(args.config)
    if err is not None:
        return err
    code, metrics, msg = execute(cfg, kind=kind, out_dir=args.out,
                                 resume=getattr(args, "resume", None), plots=not args.no_plots)
    if code != EXIT_OK and not metrics:
        return _fail(code, msg)
    _print_metrics(metrics)
    if code != EXIT_OK:
        return _fail(code, msg)
    return code


def cmd_run(args):
    return _run_kind(args, "run")


def cmd_steady(args):
    return _run_kind(args, "steady")


def cmd_construct(args):
    return _run_kind(args, "asymptotics" if args.asymptotics else "construct")


def cmd_check(args):
    try:
        spec = load_check_spec(args.spec)
        results = evaluate_checks(args.series, spec)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (io.SchemaError, OSError) as exc:
        return _fail(EXIT_SCHEMA, f"schema error: {exc}")
    if not results:
        return _fail(EXIT_CONFIG, "check spec contains no checks")
    width = max(len(name) for _, name, _, _ in results)
    for path, name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {path}  {detail}")
    failed = sum(1 for r in results if not r[2])
    if failed:
        return _fail(EXIT_CHECK_FAILED, f"{failed} of {len(results)} checks failed")
    return EXIT_OK


def cmd_sweep(args):
    try:
        code, results = sweep(args.manifest, args.out, jobs=args.jobs, plots=not args.no_plots)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot run sweep: {exc}")
    for index, path, kind, c, _, msg in results:
        print(f"{index:3d}  exit={c}  {kind or '-':<11} {path}  {msg}")
    if code != EXIT_OK:
        failed = sum(1 for r in results if r[3] != EXIT_OK)
        return _fail(code, f"{failed} of {len(results)} sweep entries failed")
    return code


def build_parser():
    taxonomy = "\n".join(f"  {k}  {v}" for k, v in sorted(EXIT_CODES.items()))
    p = argparse.ArgumentParser(
        prog="chemolab",
        description="Chemotaxis simulator with signal-dependent motility and logistic growth.",
        epilog="exit codes:\n" + taxonomy,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, helptext):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
        sp.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir)")
        sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        return sp

    sp = with_config("run", "time-dependent simulation")
    sp.add_argument("--resume", metavar="CHECKPOINT", help="continue from a .npz checkpoint")
    sp.set_defaults(func=cmd_run)

    sp = with_config("steady", "continuation sweep of steady states over Lambda")
    sp.set_defaults(func=cmd_steady)

    sp = with_config("construct", "build the concentrating initial data and report functionals")
    sp.add_argument("--asymptotics", action="store_true",
                    help="fit entropy/interaction/energy against log(lambda) over [experiment] lambdas")
    sp.set_defaults(func=cmd_construct)

    sp = sub.add_parser("check", help="evaluate assertions on series CSV files")
    sp.add_argument("series", nargs="+", help="series.csv files")
    sp.add_argument("--spec", required=True, metavar="PATH", help="INI check specification")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("sweep", help="run every config listed in a manifest")
    sp.add_argument("manifest", help="text file, one config path per line")
    sp.add_argument("--out", required=True, metavar="DIR")
    sp.add_argument("--jobs", type=int, default=1, metavar="N")
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        return _fail(EXIT_CONFIG, "--jobs must be at least 1")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return _fail(130, "interrupted")
    except Exception as exc:  # last resort: keep the taxonomy honest
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_RUNTIME, f"internal error: {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
