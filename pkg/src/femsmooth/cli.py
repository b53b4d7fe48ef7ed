"""Command-line front end.

Exit status: 0 on success, 1 on invalid input or failed checks, 2 when a
numerical step aborts (solver tolerance missed, orthogonality violated, ...).
"""
import argparse
import sys
import time

from .afem import AfemAbort
from .config import load_config

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _cmd_run(args):
    from .experiments import run_experiment
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    last = res.record.rows[-1]
    print(f"{len(res.record.rows)} iterations, final dofs {last.dofs}, "
          f"effectivity {last.effectivity:.4f}, slope {res.slope:.4f} "
          f"({time.perf_counter() - t0:.1f} s) -> {res.directory}")
    return EXIT_OK


def _cmd_compare(args):
    from .experiments import compare_estimators
    cfg = load_config(args.config)
    names = [s.strip() for s in args.estimators.split(",") if s.strip()]
    results = compare_estimators(cfg, names, jobs=args.jobs)
    print(f"{'estimator':<16}{'dofs':>8}{'error':>14}{'effectivity':>13}{'slope':>9}")
    for name, res in results.items():
        r = res.record.rows[-1]
        print(f"{name:<16}{r.dofs:>8}{r.error:>14.4e}{r.effectivity:>13.4f}{res.slope:>9.3f}")
    return EXIT_OK


def _cmd_mesh_dump(args):
    from .experiments import mesh_dump
    cfg = load_config(args.config)
    for base in mesh_dump(cfg, final=args.final):
        print(f"wrote {base}.node/.ele/.edge")
    return EXIT_OK


def _cmd_check(args):
    from .checks import run_checks
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVALID


def build_parser():
    ap = argparse.ArgumentParser(prog="femsmooth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one adaptive experiment")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("compare", help="compare estimators under one configuration")
    p.add_argument("config")
    p.add_argument("--estimators", required=True, help="comma-separated estimator names")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    p.set_defaults(func=_cmd_compare)
    p = sub.add_parser("mesh-dump", help="write the initial (and optionally final) mesh")
    p.add_argument("config")
    p.add_argument("--final", action="store_true", help="also run AFEM and dump its final mesh")
    p.set_defaults(func=_cmd_mesh_dump)
    p = sub.add_parser("check", help="run the built-in invariant checks")
    p.set_defaults(func=_cmd_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (AfemAbort, ArithmeticError, RuntimeError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
