"""Exhaustive search over caching vectors and the fixed-caching benchmarks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (Policy, Scenario, best_split, effective_inputs,
                    energy_terms, total_weighted_energy)
from .sdr import PolicyResult, recover_policy

__all__ = [
    "HorizonTooLargeError",
    "OracleResult",
    "MAX_ORACLE_HORIZON",
    "exhaustive_optimal",
    "fixed_caching_policy",
]

MAX_ORACLE_HORIZON = 22
_CHUNK = 1 << 15


class HorizonTooLargeError(ValueError):
    pass


@dataclass(eq=False)
class OracleResult:
    policy: Policy | None
    energy: float
    feasible_count: int
    candidates: int
    table: tuple[np.ndarray, np.ndarray] | None = None  # (I rows, energies)

    @property
    def feasible(self) -> bool:
        return self.feasible_count > 0


def _candidates(start: int, stop: int, N: int) -> np.ndarray:
    # row k is the binary expansion of k with slot 1 as the most significant
    # bit, so row order is lexicographic order
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    shifts = np.arange(N - 1, -1, -1, dtype=np.int64)
    return ((k >> shifts) & 1).astype(np.int8)


def exhaustive_optimal(scenario: Scenario, keep_table: bool = False) -> OracleResult:
    """Exact minimum over all ``2**N`` caching vectors.

    Each candidate gets its closed-form optimal split; among equal energies
    the lexicographically smallest vector wins.
    """
    N = scenario.N
    if N > MAX_ORACLE_HORIZON:
        raise HorizonTooLargeError(f"N={N} exceeds the enumeration budget of {MAX_ORACLE_HORIZON}")
    sys = scenario.sys
    r_off, r_up = scenario.r_off, scenario.r_up
    total = 1 << N
    best_e, best_I, best_l = np.inf, None, None
    n_feasible = 0
    rows, energies = [], []
    for start in range(0, total, _CHUNK):
        I = _candidates(start, min(total, start + _CHUNK), N)
        D = effective_inputs(scenario.L, I, scenario.cache.tau)
        l, ok = best_split(D, I, scenario.R, scenario.p, r_off, r_up, sys)
        l = np.clip(l, 0.0, D)
        E_loc, E_off, E_up, E_rem = energy_terms(D, l, I, scenario.R, scenario.p, r_off, r_up, sys)
        e = np.sum(sys.alpha1 * (E_loc + E_off + E_up) + sys.alpha0 * E_rem, axis=1)
        e = np.where(ok, e, np.inf)
        n_feasible += int(np.count_nonzero(ok))
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e, best_I, best_l = float(e[k]), I[k].copy(), l[k].copy()
        if keep_table:
            rows.append(I)
            energies.append(e)
    policy = None
    if best_I is not None:
        policy = Policy(best_I, best_l)
        # re-evaluate the winner through the plain per-policy path so the
        # reported energy matches other schemes bit for bit
        best_e = total_weighted_energy(scenario, policy).total
    table = (np.concatenate(rows), np.concatenate(energies)) if keep_table else None
    return OracleResult(policy, best_e, n_feasible, total, table)


def fixed_caching_policy(scenario: Scenario, mode: str, seed=None, prob: float = 0.5) -> PolicyResult:
    """Benchmark with caching fixed in advance: ``none``, ``all`` or ``random``.

    ``random`` draws i.i.d. Bernoulli(``prob``) decisions from ``seed``.
    """
    N = scenario.N
    if mode == "none":
        I = np.zeros(N, dtype=np.int8)
    elif mode == "all":
        I = np.ones(N, dtype=np.int8)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        I = (rng.random(N) < prob).astype(np.int8)
    else:
        raise ValueError(f"unknown caching mode {mode!r}")
    return recover_policy(scenario, I)
