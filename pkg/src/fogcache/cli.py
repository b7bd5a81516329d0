"""Command line entry point: ``python -m fogcache <command>``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .harness import (FORMAT_VERSION, ConfigError, dumps_report, evaluate_schemes,
                      generate_scenario, load_config, plot_sweep, realization_rng,
                      scenario_to_dict, sweep_deadline, sweep_error_std, write_sweep_csv)
from .online import run_online, write_decision_log
from .oracle import MAX_ORACLE_HORIZON, exhaustive_optimal
from .sdr import solve_offline

log = logging.getLogger("fogcache")

ORACLE_IN_RUN_MAX_N = 16


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="built-in name (default, small) or path to a YAML file")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--plot", action="store_true", help="also write plot files")
    common.add_argument("--realizations", type=int, default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fogcache", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one scenario, every scheme, JSON report")
    sub.add_parser("sweep-deadline", parents=[common], help="mean energy versus deadline")
    sub.add_parser("sweep-sigma", parents=[common], help="mean energy versus prediction-error std")
    sub.add_parser("oracle", parents=[common], help="exhaustive optimum versus the relaxation")
    st = sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    st.add_argument("--only", type=int, nargs="*", default=None, help="criterion numbers")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, realizations=args.realizations,
                          workers=args.workers)
    except ConfigError as exc:
        print(f"fogcache: config error: {exc}", file=sys.stderr)
        return 2
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    handler = {
        "run": _run,
        "sweep-deadline": _sweep,
        "sweep-sigma": _sweep,
        "oracle": _oracle,
        "selftest": _selftest,
    }[args.command]
    return handler(cfg, args, out)


def _run(cfg, args, out: Path) -> int:
    sc = generate_scenario(cfg, realization_rng(cfg.seed, 0, 0))
    res = evaluate_schemes(sc, cfg.windows, realization_rng(cfg.seed, 0, 1),
                           oracle=cfg.N <= ORACLE_IN_RUN_MAX_N)
    report = {
        "format_version": FORMAT_VERSION,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "scenario": scenario_to_dict(sc),
        "schemes": {k: v.as_dict() for k, v in res.items()},
    }
    (out / "run.json").write_text(dumps_report(report) + "\n")
    with open(out / "run.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["scheme", "energy_J", "feasible", "flagged_slots", "format_version"])
        for k, v in res.items():
            w.writerow([k, repr(v.energy), int(v.feasible), v.flagged, FORMAT_VERSION])
    for S in cfg.windows:
        with open(out / f"online_S{S}_log.csv", "w", newline="") as fp:
            write_decision_log(run_online(sc, S), fp)
    for k, v in res.items():
        print(f"{k:>14s}  {v.energy:.6g} J  {'feasible' if v.feasible else 'INFEASIBLE'}")
    lb = res["lower_bound"]
    if lb.status in ("NumericalFailure", "MaxIterations"):
        print(f"fogcache: relaxation failed ({lb.status})", file=sys.stderr)
        return 3
    return 0


def _sweep(cfg, args, out: Path) -> int:
    if args.command == "sweep-deadline":
        rows, name, xlabel = sweep_deadline(cfg), "sweep_deadline", "per-slot deadline T (s)"
    else:
        rows, name, xlabel = sweep_error_std(cfg), "sweep_sigma", "prediction error std (bits)"
    with open(out / f"{name}.csv", "w", newline="") as fp:
        write_sweep_csv(rows, fp)
    if args.plot:
        try:
            plot_sweep(rows, out / f"{name}.png", xlabel)
        except ImportError:
            print("fogcache: --plot needs matplotlib (pip install 'artifact[plot]')", file=sys.stderr)
            return 1
    for r in rows:
        print(f"{r.sweep_var:>10.4g} {r.scheme:>12s} {r.mean_energy_J:.6g} J "
              f"(n={r.n}, infeasible {r.infeasible_rate:.0%})")
    return 0


def _oracle(cfg, args, out: Path) -> int:
    if cfg.N > MAX_ORACLE_HORIZON:
        print(f"fogcache: N={cfg.N} too large for enumeration", file=sys.stderr)
        return 2
    rows = []
    for k in range(cfg.realizations):
        sc = generate_scenario(cfg, realization_rng(cfg.seed, k, 0))
        o = exhaustive_optimal(sc)
        off = solve_offline(sc)
        rows.append((k, o.energy, off.lower_bound, off.energy, off.repaired))
    with open(out / "oracle_gap.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["realization", "oracle_J", "relaxed_J", "recovered_J",
                    "repaired", "format_version"])
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), int(r[4]), FORMAT_VERSION])
    E = np.array([r[1:4] for r in rows], dtype=float)
    ok = np.all(np.isfinite(E), axis=1)
    print(f"{ok.sum()} of {len(rows)} realizations feasible")
    if ok.any():
        o, lb, rec = E[ok].T
        for label, x in (("oracle vs relaxed", (o - lb) / lb), ("recovered vs oracle", (rec - o) / o)):
            print(f"{label:>20s}: mean {x.mean():.3e}  median {np.median(x):.3e}  max {x.max():.3e}")
        print(f"recovered equals oracle in {np.sum(np.isclose(rec, o, rtol=1e-9, atol=0))} cases")
    return 0


def _selftest(cfg, args, out: Path) -> int:
    from .acceptance import run_all

    results = run_all(out=out, only=args.only)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
