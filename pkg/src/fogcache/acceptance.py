"""Acceptance checks, shared by ``fogcache selftest`` and the test suite.

Each entry of :data:`CRITERIA` maps a :class:`Study` to a :class:`CriterionResult`. Expensive
studies are computed once per :class:`Study` and reused; every policy a
study emits is kept for the feasibility replay.
"""
from __future__ import annotations

import filecmp
import functools
import itertools
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .harness import (ScenarioConfig, generate_scenario, load_config, realization_rng,
                      sweep_error_std, write_sweep_csv)
from .model import Policy, Scenario, check_feasible, effective_inputs, total_weighted_energy
from .online import make_window, run_online, window_sdp
from .oracle import exhaustive_optimal, fixed_caching_policy
from .sdr import (build_sdp, lift, rank_certificate, solve_offline,
                  solve_relaxation)

__all__ = ["CriterionResult", "Study", "run_all", "CRITERIA"]

RANGE_TOL = 1e-6
SANDWICH_RTOL = 1e-6


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2}. {self.name}: {self.detail} ({self.elapsed:.1f}s)"


def _le(a: float, b: float, rtol: float) -> bool:
    """``a <= b`` up to a relative slack; ``inf <= inf`` holds."""
    if np.isinf(b):
        return True
    return a <= b + rtol * abs(b)


class Study:
    """Memoised computations behind the criteria."""

    def __init__(self, out: Path | None = None):
        self.out = Path(out) if out is not None else None
        self.emitted: list[tuple[str, Scenario, Policy, tuple[int, ...]]] = []
        self.last_columns: list[np.ndarray] = []

    def _emit(self, tag, sc, policy, exempt=()):
        if policy is not None:
            self.emitted.append((tag, sc, policy, exempt))

    def _track(self, sol):
        if sol.ok:
            self.last_columns.append(sol.A[:-1, -1].copy())

    # criterion 1 ------------------------------------------------------
    @functools.cached_property
    def lifting(self) -> dict:
        t0 = time.perf_counter()
        worst_obj, worst_D, checked = 0.0, 0.0, 0
        exact = True
        rng = np.random.default_rng(101)
        for j in range(20):
            N = 3 + j % 4
            cfg = load_config(None, N=N, T=0.35, windows=[N])
            sc = generate_scenario(cfg, realization_rng(1, j, 0))
            data = build_sdp(sc)
            self._track(solve_relaxation(data))
            for I in itertools.product((0, 1), repeat=N):
                A = lift(I)
                D = effective_inputs(sc.L, I, sc.cache.tau)
                D_sdp = data.effective_inputs(A)
                exact &= bool(np.array_equal(D_sdp, D))
                worst_D = max(worst_D, float(np.max(np.abs(D_sdp - D) / D)))
                for l in (rng.uniform(0.0, D), D, np.zeros(N)):
                    e = total_weighted_energy(sc, Policy(I, l)).total
                    worst_obj = max(worst_obj, abs(data.objective(A, l) - e) / abs(e))
                    checked += 1
        return dict(worst_obj=worst_obj, worst_D=worst_D, exact=exact,
                    checked=checked, elapsed=time.perf_counter() - t0)

    # criteria 2-5 -----------------------------------------------------
    @functools.cached_property
    def sandwich(self) -> dict:
        t0 = time.perf_counter()
        cfg = load_config(None, N=8, T=0.35)
        recs = []
        k = 0
        while len(recs) < 100:
            sc = generate_scenario(cfg, realization_rng(2, k, 0))
            k += 1
            o = exhaustive_optimal(sc)
            if not o.feasible:
                continue
            off = solve_offline(sc)
            self._track(off.relaxation)
            none = fixed_caching_policy(sc, "none")
            allc = fixed_caching_policy(sc, "all")
            self._emit("oracle", sc, o.policy)
            if off.recovered is not None and off.recovered.feasible:
                self._emit("offline", sc, off.recovered.policy)
            for r, tag in ((none, "none"), (allc, "all")):
                if r.feasible:
                    self._emit(tag, sc, r.policy)
            rc = (rank_certificate(off.relaxation, sc, off.recovered.policy)
                  if off.relaxation.ok and off.recovered is not None else None)
            recs.append(dict(
                seed=k - 1, status=str(off.relaxation.status), relaxed=off.lower_bound,
                oracle=o.energy, recovered=off.energy, none=none.energy, all=allc.energy,
                repaired=off.repaired, rank=off.relaxation.rank,
                positive=rc.all_offloads_positive if rc else False,
                eig=rc.eigenvalues if rc else None))
        return dict(records=recs, drawn=k, elapsed=time.perf_counter() - t0)

    # criterion 6 ------------------------------------------------------
    @functools.cached_property
    def monotone(self) -> dict:
        t0 = time.perf_counter()
        grid = np.linspace(0.25, 0.45, 6)
        cfg = load_config(None, N=8)
        curves = []
        for k in range(10):
            base = generate_scenario(cfg, realization_rng(6, k, 0))
            o_curve, r_curve = [], []
            for T in grid:
                sc = base.with_deadline(float(T))
                o = exhaustive_optimal(sc)
                off = solve_offline(sc)
                self._emit("oracle", sc, o.policy)
                if off.recovered is not None and off.recovered.feasible:
                    self._emit("offline", sc, off.recovered.policy)
                o_curve.append(o.energy)
                r_curve.append(off.lower_bound)
            curves.append((o_curve, r_curve))
        return dict(grid=grid, curves=curves, elapsed=time.perf_counter() - t0)

    # criterion 7 ------------------------------------------------------
    @functools.cached_property
    def online_consistency(self) -> dict:
        t0 = time.perf_counter()
        cfg = load_config(None, N=8, T=0.35, sigma=0.0)
        recs = []
        k = 0
        while len(recs) < 20:
            sc = generate_scenario(cfg, realization_rng(7, k, 0))
            k += 1
            if not exhaustive_optimal(sc).feasible:
                continue
            offline = build_sdp(sc)
            win = window_sdp(make_window(sc, 1, sc.N, []), sc)
            diff = max(float(np.max(np.abs(getattr(offline, f) - getattr(win, f))))
                       for f in ("F_prime", "W", "G_prime", "E", "U", "H", "u"))
            off = solve_offline(sc)
            res = run_online(sc, sc.N)
            none = fixed_caching_policy(sc, "none")
            self._emit("online", sc, res.policy, tuple(res.flagged))
            recs.append(dict(diff=diff, online=res.report.total, online_feasible=res.feasible,
                             flagged=len(res.flagged), relaxed=off.lower_bound,
                             none=none.energy, slot1_online=(int(res.policy.I[0]), float(res.policy.l[0])),
                             slot1_offline=(int(off.recovered.policy.I[0]), float(off.recovered.policy.l[0]))))
        return dict(records=recs, elapsed=time.perf_counter() - t0)

    # criterion 8 ------------------------------------------------------
    @functools.cached_property
    def degenerate(self) -> dict:
        t0 = time.perf_counter()
        cfg = load_config(None, N=8, T=0.35, tau=[1.0, 1.0])
        recs = []
        k = 0
        while len(recs) < 20:
            sc = generate_scenario(cfg, realization_rng(8, k, 0))
            k += 1
            o = exhaustive_optimal(sc)
            if not o.feasible:
                continue
            none = fixed_caching_policy(sc, "none")
            self._emit("oracle", sc, o.policy)
            recs.append(dict(I=None if o.policy is None else o.policy.I.tolist(),
                             oracle=o.energy, none=none.energy, feasible=o.feasible))
        return dict(records=recs, elapsed=time.perf_counter() - t0)

    # criterion 11 -----------------------------------------------------
    @functools.cached_property
    def sigma_sweep(self) -> dict:
        t0 = time.perf_counter()
        cfg = load_config(None, N=10, T=0.3, windows=[4, 6], realizations=50,
                          sigma_grid=[0.0, 2e4, 5e4, 8e4, 1e5], seed=11)
        rows, raw = sweep_error_std(cfg, with_raw=True)
        csv_path = None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            csv_path = self.out / "fig3_sigma_sweep.csv"
            with open(csv_path, "w", newline="") as fp:
                write_sweep_csv(rows, fp)
        return dict(rows=rows, raw=raw, csv=csv_path, elapsed=time.perf_counter() - t0)


def _timed(fn: Callable[[Study], tuple[bool, str, dict]], number: int, name: str):
    @functools.wraps(fn)
    def run(study: Study) -> CriterionResult:
        t0 = time.perf_counter()
        passed, detail, data = fn(study)
        return CriterionResult(number, name, passed, detail, time.perf_counter() - t0, data)
    run.number = number
    return run


def _c1(study: Study):
    r = study.lifting
    ok = r["worst_obj"] <= 1e-9 and r["exact"] and r["elapsed"] < 30
    return ok, (f"{r['checked']} lifted points, worst objective rel err {r['worst_obj']:.1e}, "
                f"D exact={r['exact']}, {r['elapsed']:.1f}s < 30s"), r


def _c2(study: Study):
    s = study.sandwich
    bad = []
    for r in s["records"]:
        chain = (_le(r["relaxed"], r["oracle"], SANDWICH_RTOL)
                 and _le(r["oracle"], r["recovered"], SANDWICH_RTOL)
                 and _le(r["recovered"], min(r["none"], r["all"]), SANDWICH_RTOL)
                 and np.isfinite(r["recovered"]))
        if not chain or r["status"] != "Optimal":
            bad.append(r["seed"])
    repaired = sum(r["repaired"] for r in s["records"])
    ok = not bad and s["elapsed"] < 300
    return ok, (f"{len(s['records']) - len(bad)}/100 satisfy relaxed <= oracle <= recovered "
                f"<= min(none, all); {repaired} used threshold repair; {s['elapsed']:.1f}s < 300s"), dict(bad=bad)


def _c3(study: Study):
    recs = study.sandwich["records"]
    gap = np.array([(r["recovered"] - r["relaxed"]) / r["relaxed"] for r in recs])
    hist, edges = np.histogram(gap, bins=[0, 1e-6, 1e-3, 1e-2, 0.05, 0.1, 0.5, np.inf])
    med = float(np.median(gap))
    text = ", ".join(f"[{a:g},{b:g}):{c}" for a, b, c in zip(edges[:-1], edges[1:], hist))
    return med < 0.10, f"median gap {med:.3%} < 10%; histogram {text}", dict(gap=gap, hist=hist, edges=edges)


def _c4(study: Study):
    study.lifting, study.sandwich
    cols = np.concatenate(study.last_columns)
    lo, hi = float(cols.min()), float(cols.max())
    ok = lo >= -RANGE_TOL and hi <= 1 + RANGE_TOL
    return ok, f"{len(study.last_columns)} optimal solves, last column in [{lo:.2e}, {1 + (hi - 1):.12f}]", {}


def _c5(study: Study):
    recs = [r for r in study.sandwich["records"] if r["positive"] and r["eig"] is not None]
    exceptions = [(r["seed"], r["eig"][2] / r["eig"][0]) for r in recs
                  if not r["eig"][2] < 1e-6 * r["eig"][0]]
    n = len(recs)
    frac = 1.0 - len(exceptions) / n if n else 1.0
    ok = frac >= 0.95
    return ok, (f"{n} scenarios offload at every slot; rank <= 2 in {n - len(exceptions)} "
                f"({frac:.0%}); exceptions {exceptions}"), dict(n=n, exceptions=exceptions)


def _c6(study: Study):
    m = study.monotone
    bad = 0
    for curve_o, curve_r in m["curves"]:
        for c in (curve_o, curve_r):
            for a, b in zip(c, c[1:]):
                if np.isfinite(a) and not (b <= a + 1e-8):
                    bad += 1
    return bad == 0, f"10 scenarios x 6 deadlines in [0.25, 0.45] s; {bad} increases beyond 1e-8 J", {}


def _c7(study: Study):
    recs = study.online_consistency["records"]
    diff = max(r["diff"] for r in recs)
    inside = [r["relaxed"] - 1e-6 * r["relaxed"] <= r["online"] and _le(r["online"], r["none"], 1e-9)
              and r["online_feasible"] for r in recs]
    same = sum(r["slot1_online"] == r["slot1_offline"] for r in recs)
    ok = diff <= 1e-12 and all(inside)
    return ok, (f"window vs offline matrices max diff {diff:.1e}; online energy within "
                f"[relaxed, no-caching] in {sum(inside)}/20; slot-1 decisions equal in {same}/20"), {}


def _c8(study: Study):
    recs = study.degenerate["records"]
    good = sum(r["feasible"] and not any(r["I"]) and r["oracle"] == r["none"] for r in recs)
    return good == len(recs), f"oracle returned I=0 with energy == no-caching in {good}/20 feasible scenarios", {}


def _c9(study: Study):
    for prop in ("sandwich", "monotone", "online_consistency", "degenerate"):
        getattr(study, prop)
    failures, exempt = [], 0
    for tag, sc, pol, flagged in study.emitted:
        exempt += len(flagged)
        bad = [v for v in check_feasible(sc, pol) if v.slot not in flagged]
        if bad:
            failures.append((tag, bad[:2]))
    ok = not failures
    return ok, (f"{len(study.emitted)} emitted policies replayed, {len(failures)} infeasible, "
                f"{exempt} fallback-flagged online slots exempt"), dict(failures=failures)


def _c10(study: Study):
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for d in dirs:
            subprocess.run([sys.executable, "-m", "fogcache", "run", "--seed", "1", "--out", str(d)],
                           check=True, capture_output=True)
        names = sorted(p.name for p in dirs[0].iterdir())
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    ok = bool(names) and not mismatch and not errors
    return ok, f"{len(match)} output files byte-identical across two runs ({', '.join(names)})", {}


def _c11(study: Study):
    s = study.sigma_sweep
    by = {}
    for r in s["rows"]:
        by.setdefault(r.sweep_var, {})[r.scheme] = r
    bad, notes = [], []
    for sig, d in sorted(by.items()):
        lo, hi = d["lower_bound"].mean_energy_J, d["all"].mean_energy_J
        for S in (4, 6):
            m = d[f"online_S{S}"].mean_energy_J
            if not (np.isfinite(m) and lo <= m <= hi):
                bad.append((sig, S))
        notes.append(f"sigma={sig:g}: S4-S6={d['online_S4'].mean_energy_J - d['online_S6'].mean_energy_J:+.2e} J (n={d['all'].n})")
    ok = not bad and s["elapsed"] < 900
    where = f"; CSV {s['csv']}" if s["csv"] else ""
    return ok, (f"online means inside [lower bound, all-caching] at every sigma{'' if not bad else f' except {bad}'}; "
                + "; ".join(notes) + f"; {s['elapsed']:.0f}s < 900s" + where), {}


CRITERIA = [
    _timed(_c1, 1, "lifting identity"),
    _timed(_c2, 2, "sandwich bound"),
    _timed(_c3, 3, "near-optimality gap"),
    _timed(_c4, 4, "last-column range"),
    _timed(_c5, 5, "rank at most two"),
    _timed(_c6, 6, "monotone in deadline"),
    _timed(_c7, 7, "online consistency"),
    _timed(_c8, 8, "degenerate tau oracle"),
    _timed(_c9, 9, "feasibility replay"),
    _timed(_c10, 10, "determinism"),
    _timed(_c11, 11, "error-std sweep"),
]


def run_all(out: Path | None = None, only=None, echo=print) -> list[CriterionResult]:
    study = Study(out)
    results = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        res = crit(study)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
