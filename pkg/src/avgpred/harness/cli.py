"""Command-line entry point: ``avgpred run|compare|sweep|certify``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, DimensionError, DomainError, PreconditionError, SimulationError
from .runner import (SWEEP_AXES, atomic_write, certify_scenario, compare_controllers,
                     dump_json, run_scenario, sweep, sweep_csv)
from .scenario import bundled_names, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_RUNTIME = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as e:
        raise ConfigError(f"--values: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avgpred",
                                description="Average-predictor control of delayed switched systems.")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="certificate + simulation + diagnostics")
    r.add_argument("scenario")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the signal seed")

    c = sub.add_parser("compare", help="paired comparison of controllers")
    c.add_argument("scenario")
    c.add_argument("--controllers", default="", help="comma-separated, e.g. average,single_mode:0")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", default=None, help="write <name>.comparison.json here")

    s = sub.add_parser("sweep", help="certificate and decay rate across one parameter")
    s.add_argument("scenario")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma or space separated numbers")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--no-sim", action="store_true", help="certificate columns only")
    s.add_argument("--out", default=None, help="write <name>.sweep_<axis>.csv here")

    k = sub.add_parser("certify", help="certificate only, no simulation")
    k.add_argument("scenario")
    k.add_argument("--out", default=None)

    sub.add_parser("list", help="names of the bundled scenarios")
    return p


def _emit(text: str, out_dir, filename: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
    else:
        path = Path(out_dir) / filename
        atomic_write(path, text)
        print(path)


def dispatch(args) -> int:
    if args.verb == "list":
        print("\n".join(bundled_names()))
        return EXIT_OK
    sc = load_scenario(args.scenario)
    if args.verb == "run":
        res = run_scenario(sc, args.out, seed=args.seed)
        for path in res["paths"].values():
            print(path)
        summ = res["summary"]
        print(f"epsilon={summ['epsilon']:.6g} epsilon_star={summ['epsilon_star']:.6g} "
              f"stable={str(summ['stable']).lower()} xi_hat={summ['xi_hat']:.6g} "
              f"final_norm={summ['final_norm']:.6g}")
    elif args.verb == "compare":
        names = [n.strip() for n in args.controllers.split(",") if n.strip()]
        res = compare_controllers(sc, names, seed=args.seed)
        _emit(dump_json(res), args.out, f"{sc.name}.comparison.json")
    elif args.verb == "sweep":
        rows = sweep(sc, args.axis, _floats(args.values), args.seeds, simulate_runs=not args.no_sim)
        _emit(sweep_csv(rows), args.out, f"{sc.name}.sweep_{args.axis}.csv")
        for r in rows:
            if r["error"]:
                print(f"value={r['axis_value']} seed={r['seed']}: {r['error']}", file=sys.stderr)
    elif args.verb == "certify":
        _emit(dump_json(certify_scenario(sc)), args.out, f"{sc.name}.certificate.json")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except (ConfigError, DimensionError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as e:
        print(f"precondition failed: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (SimulationError, DomainError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
