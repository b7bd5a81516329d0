"""Random scenarios, scheme comparison and the deadline / error-std sweeps.

Seeding rule: realisation ``k`` under master seed ``s`` draws its scenario
from ``numpy.random.default_rng([s, k, 0])`` and its random-caching
benchmark from ``default_rng([s, k, 1])``. Adding schemes therefore never
shifts any existing stream, and a sweep over ``T`` or ``sigma`` reuses the
same channels and predictions for a given ``k`` (the prediction error is
drawn by inverse CDF from a fixed uniform, so it scales with ``sigma``).
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
import yaml
from scipy import stats

from .conic import SolverOptions
from .model import CacheModel, Policy, Scenario, SystemParams, check_feasible
from .online import run_online
from .oracle import exhaustive_optimal, fixed_caching_policy
from .sdr import solve_offline

__all__ = [
    "FORMAT_VERSION",
    "ConfigError",
    "ScenarioConfig",
    "SweepRow",
    "SchemeOutcome",
    "load_config",
    "generate_scenario",
    "realization_rng",
    "evaluate_schemes",
    "run_sweep",
    "sweep_deadline",
    "sweep_error_std",
    "write_sweep_csv",
    "read_sweep_csv",
    "plot_sweep",
    "scenario_to_dict",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CSV_COLUMNS = ("sweep_var", "scheme", "mean_energy_J", "stderr_J",
               "infeasible_rate", "n", "format_version")


class ConfigError(ValueError):
    pass


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1e3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    N: int = 10
    M: int = 3
    T: float = 0.3
    T_grid: tuple[float, ...] = (0.30, 0.32, 0.34, 0.36, 0.38, 0.40)
    pathloss_db: float = -117.0
    noise_dbm_hz: float = -174.0
    B_off: float = 2.5e6
    B_up: float = 2.5e6
    p_dbm: float = 24.0
    L_range: tuple[float, float] = (1e5, 1e6)
    R_range: tuple[float, float] = (1e5, 1e6)
    sigma: float = 100.0
    sigma_grid: tuple[float, ...] = (0.0, 2e4, 5e4, 8e4, 1e5)
    tau: tuple[float, ...] = (0.5, 0.75)
    alpha1: float = 0.85
    alpha0: float = 0.15
    kappa_loc: float = 1e-28
    kappa_e: float = 1e-28
    c_loc: float = 1e3
    c_e: float = 1e3
    f_loc: float = 8e8
    f_e: float = 2e9
    windows: tuple[int, ...] = (4, 6)
    realizations: int = 500
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("T_grid", "L_range", "R_range", "sigma_grid", "tau", "windows"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("L_range", "R_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must be ordered and nonnegative")
        if self.L_range[0] <= 0:
            raise ConfigError("L_range must be positive")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.sigma < 0 or any(s < 0 for s in self.sigma_grid):
            raise ConfigError("sigma must be nonnegative")
        if any(not 1 <= S <= self.N for S in self.windows):
            raise ConfigError("window lengths must lie in 1..N")
        try:
            self.system()
            CacheModel(self.tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def system(self, T: float | None = None) -> SystemParams:
        return SystemParams(
            N=self.N, T=self.T if T is None else T, alpha1=self.alpha1,
            alpha0=self.alpha0, kappa_loc=self.kappa_loc, kappa_e=self.kappa_e,
            c_loc=self.c_loc, c_e=self.c_e, f_loc=self.f_loc, f_e=self.f_e,
            B_off=self.B_off, B_up=self.B_up)

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(self).items()}


_BUILTIN = {
    "default": {},
    "small": {"N": 8, "T": 0.35, "realizations": 20, "windows": [4, 6]},
}


def load_config(source: str | Path | None = None, **overrides) -> ScenarioConfig:
    """Config from a built-in name (``default``, ``small``) or a flat YAML file.

    The file is a single mapping whose keys are :class:`ScenarioConfig`
    field names; sequences are YAML lists.
    """
    if source is None:
        values = {}
    elif str(source) in _BUILTIN:
        values = dict(_BUILTIN[str(source)])
    else:
        try:
            values = yaml.safe_load(Path(source).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config must be a flat key-value mapping")
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in values.items()}
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _coerce(key: str, value):
    # YAML 1.1 reads ``5.0e4`` (no exponent sign) as a string, so convert
    # every value to its field's numeric type here
    kind = _FIELD_TYPES[key]
    scalar = int if "int" in kind else float
    try:
        if kind.startswith("tuple"):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            if any(isinstance(x, (list, tuple, dict, bool)) for x in value):
                raise TypeError
            return tuple(_number(scalar, x) for x in value)
        if isinstance(value, (list, tuple, dict, bool)):
            raise TypeError
        return _number(scalar, value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def _number(kind, x):
    if kind is int:
        f = float(x)
        if f != int(f):
            raise ValueError
        return int(f)
    return float(x)


def realization_rng(seed: int, k: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, k, stream])


def _mrc_gain(rng: np.random.Generator, N: int, M: int) -> np.ndarray:
    # sum over M antennas of |CN(0,1)|^2
    z = rng.standard_normal((N, M, 2))
    return 0.5 * np.sum(z**2, axis=(1, 2))


def generate_scenario(config: ScenarioConfig, seed=0, sigma: float | None = None,
                      T: float | None = None) -> Scenario:
    """Draw one scenario; fully determined by ``config`` and ``seed``.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    rng = np.random.default_rng(seed)
    N = config.N
    sigma = config.sigma if sigma is None else sigma
    L_hat = rng.uniform(*config.L_range, size=N)
    R = rng.uniform(*config.R_range, size=N)
    pl = db_to_linear(config.pathloss_db)
    n0 = dbm_to_watt(config.noise_dbm_hz)
    h = pl * _mrc_gain(rng, N, config.M) / (n0 * config.B_off)
    g = pl * _mrc_gain(rng, N, config.M) / (n0 * config.B_up)
    u = rng.uniform(size=N)
    if sigma > 0:
        a = (1.0 - L_hat) / sigma
        dL = sigma * stats.truncnorm.ppf(u, a, np.inf)
        L = np.maximum(L_hat + dL, 1.0)
    else:
        L = L_hat.copy()
    p = np.full(N, dbm_to_watt(config.p_dbm))
    return Scenario(config.system(T), CacheModel(config.tau), L, L_hat, R, h, g, p)


@dataclass
class SchemeOutcome:
    energy: float
    feasible: bool
    policy: Policy | None = None
    flagged: int = 0
    status: str = ""

    def as_dict(self) -> dict:
        d = {"energy_J": _num(self.energy), "feasible": self.feasible,
             "flagged_slots": self.flagged, "status": self.status}
        if self.policy is not None:
            d["I"] = self.policy.I.tolist()
            d["l"] = self.policy.l.tolist()
        return d


def _num(x: float):
    return x if math.isfinite(x) else None


def scheme_names(windows: Sequence[int], fixed: bool = True) -> list[str]:
    names = ["lower_bound", "offline"] + [f"online_S{S}" for S in windows]
    if fixed:
        names += ["random", "none", "all"]
    else:
        names += ["all"]
    return names


def evaluate_schemes(scenario: Scenario, windows: Sequence[int], random_seed=None,
                     schemes: Iterable[str] | None = None, oracle: bool = False,
                     options: SolverOptions | None = None) -> dict[str, SchemeOutcome]:
    """Energy of every requested scheme on one realised scenario.

    Infeasible or failed schemes get ``energy = inf``.
    """
    wanted = set(schemes) if schemes is not None else set(scheme_names(windows))
    out: dict[str, SchemeOutcome] = {}
    if wanted & {"lower_bound", "offline"}:
        off = solve_offline(scenario, options)
        status = str(off.relaxation.status)
        if "lower_bound" in wanted:
            out["lower_bound"] = SchemeOutcome(off.lower_bound, off.relaxation.ok, None, 0, status)
        if "offline" in wanted:
            rec = off.recovered
            out["offline"] = SchemeOutcome(
                off.energy, rec is not None and rec.feasible,
                rec.policy if rec is not None else None, 0, status)
    for S in windows:
        name = f"online_S{S}"
        if name in wanted:
            res = run_online(scenario, S)
            out[name] = SchemeOutcome(res.energy, res.feasible, res.policy,
                                      len(res.flagged), "fallback" if any(s.fallback for s in res.log) else "ok")
    for mode in ("random", "none", "all"):
        if mode in wanted:
            r = fixed_caching_policy(scenario, mode, seed=random_seed)
            out[mode] = SchemeOutcome(r.energy, r.feasible, r.policy)
    if oracle:
        o = exhaustive_optimal(scenario)
        out["oracle"] = SchemeOutcome(o.energy, o.feasible, o.policy)
    for name, res in out.items():
        if res.feasible and res.policy is not None:
            bad = check_feasible(scenario, res.policy)
            if bad:
                log.warning("%s emitted an infeasible policy: %s", name, bad[:3])
    return out


@dataclass(frozen=True)
class SweepRow:
    sweep_var: float
    scheme: str
    mean_energy_J: float
    stderr_J: float
    infeasible_rate: float
    n: int


def _cell(args):
    config, k, var, value, schemes = args
    if var == "T":
        sc = generate_scenario(config, realization_rng(config.seed, k, 0), T=value)
    else:
        sc = generate_scenario(config, realization_rng(config.seed, k, 0), sigma=value)
    res = evaluate_schemes(sc, config.windows, realization_rng(config.seed, k, 1), schemes)
    return [res[s].energy for s in schemes]


def run_sweep(config: ScenarioConfig, var: str, values: Sequence[float],
              schemes: Sequence[str], common: bool = True
              ) -> tuple[list[SweepRow], dict[float, np.ndarray]]:
    """Sweep ``var`` (``"T"`` or ``"sigma"``) over ``values``.

    Returns the aggregated rows and, per value, the raw energy table of
    shape ``(realizations, len(schemes))`` (``inf`` marks infeasible).
    Means only use realisations on which every scheme is feasible; with
    ``common`` (the default) that must hold at every swept value, so all
    points of a curve average the same realisations.
    """
    if var not in ("T", "sigma"):
        raise ValueError("var must be 'T' or 'sigma'")
    schemes = list(schemes)
    K = config.realizations
    jobs = [(config, k, var, v, schemes) for v in values for k in range(K)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            flat = list(pool.map(_cell, jobs, chunksize=4))
    else:
        flat = [_cell(j) for j in jobs]
    raw = {}
    for j, v in enumerate(values):
        raw[v] = np.array(flat[j * K:(j + 1) * K], dtype=float).reshape(K, len(schemes))
    keep = None
    if common:
        keep = np.all([np.all(np.isfinite(E), axis=1) for E in raw.values()], axis=0)
    rows = []
    for v, E in raw.items():
        rows.extend(aggregate(v, E, schemes, keep))
    return rows, raw


def aggregate(value: float, E: np.ndarray, schemes: Sequence[str],
              keep: np.ndarray | None = None) -> list[SweepRow]:
    """Rows for one swept value; ``keep`` optionally restricts the realisations
    averaged (infeasibility rates always use all of them)."""
    finite = np.isfinite(E)
    mutual = np.all(finite, axis=1)
    if keep is not None:
        mutual &= keep
    n = int(mutual.sum())
    rows = []
    for j, name in enumerate(schemes):
        x = E[mutual, j]
        mean = float(np.mean(x)) if n else float("nan")
        se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        rows.append(SweepRow(float(value), name, mean, se,
                             float(1.0 - finite[:, j].mean()), n))
    return rows


def sweep_deadline(config: ScenarioConfig, with_raw: bool = False):
    schemes = scheme_names(config.windows)
    rows, raw = run_sweep(config, "T", config.T_grid, schemes)
    return (rows, raw) if with_raw else rows


def sweep_error_std(config: ScenarioConfig, with_raw: bool = False):
    schemes = scheme_names(config.windows, fixed=False)
    rows, raw = run_sweep(config, "sigma", config.sigma_grid, schemes)
    return (rows, raw) if with_raw else rows


def write_sweep_csv(rows: Sequence[SweepRow], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(r.sweep_var), r.scheme, repr(r.mean_energy_J), repr(r.stderr_J),
                    repr(r.infeasible_rate), r.n, FORMAT_VERSION])


def read_sweep_csv(fp: TextIO) -> list[SweepRow]:
    rows = []
    for rec in csv.DictReader(fp):
        rows.append(SweepRow(float(rec["sweep_var"]), rec["scheme"],
                             float(rec["mean_energy_J"]), float(rec["stderr_J"]),
                             float(rec["infeasible_rate"]), int(rec["n"])))
    return rows


def plot_sweep(rows: Sequence[SweepRow], path: Path, xlabel: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for name in dict.fromkeys(r.scheme for r in rows):
        pts = [(r.sweep_var, r.mean_energy_J) for r in rows if r.scheme == name]
        ax.plot(*zip(*pts), marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("average weighted-sum energy (J)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "N": sc.N, "T": sc.sys.T, "tau": list(sc.cache.tau),
        "L": sc.L.tolist(), "L_hat": sc.L_hat.tolist(), "R": sc.R.tolist(),
        "h": sc.h.tolist(), "g": sc.g.tolist(), "p": sc.p.tolist(),
        "r_off": sc.r_off.tolist(), "r_up": sc.r_up.tolist(),
    }


def dumps_report(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
