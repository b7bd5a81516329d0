"""Sliding-window online caching and offloading.

At slot ``i`` only ``L_1..L_i`` are known exactly; later slots use their
predictions. Each slot solves the lifted relaxation over the next ``S``
slots, rounds it, and commits the first slot's decisions only.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .conic import SolveStatus, SolverOptions
from .model import (EnergyReport, Policy, Scenario, Violation, best_split,
                    check_feasible, effective_inputs, offload_rate,
                    total_weighted_energy, upload_rate)
from .sdr import SdpData, lifted_sdp, round_caching, solve_relaxation

__all__ = [
    "OnlineConfig",
    "WindowView",
    "SlotLog",
    "OnlineResult",
    "make_window",
    "window_sdp",
    "run_online",
    "write_decision_log",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OnlineConfig:
    S: int
    options: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True, eq=False)
class WindowView:
    """What the controller may see at slot ``i`` (1-based).

    ``L[0]`` is the exact current length, the rest are predictions.
    ``prior`` holds the committed decisions ``(I[i-2], I[i-1])``.
    """

    i: int
    source: np.ndarray  # 1-based slot each window position was read from
    L: np.ndarray
    R: np.ndarray
    h: np.ndarray
    g: np.ndarray
    p: np.ndarray
    prior: tuple[int, int]

    @property
    def S(self) -> int:
        return len(self.L)


def make_window(scenario: Scenario, i: int, S: int, committed: Sequence[int]) -> WindowView:
    """Window of ``S`` slots starting at slot ``i``.

    Positions past the horizon wrap around to the predicted parameters of
    slots ``1..S-1``.
    """
    N = scenario.N
    if not 1 <= i <= N:
        raise ValueError(f"slot {i} outside 1..{N}")
    if not 1 <= S <= N:
        raise ValueError(f"window length {S} outside 1..{N}")
    idx = np.arange(i - 1, i - 1 + S)
    idx = np.where(idx >= N, idx - N, idx)
    L = scenario.L_hat[idx].copy()
    L[0] = scenario.L[i - 1]
    hist = [0, 0] + [int(x) for x in committed[:i - 1]]
    return WindowView(i, idx + 1, L, scenario.R[idx], scenario.h[idx],
                      scenario.g[idx], scenario.p[idx], (hist[-2], hist[-1]))


def window_sdp(view: WindowView, scenario: Scenario) -> SdpData:
    sys = scenario.sys
    r_off = offload_rate(view.p, view.h, sys.B_off)
    r_up = upload_rate(view.p, view.g, sys.B_up)
    return lifted_sdp(view.L, view.R, view.p, r_off, r_up, sys,
                      scenario.cache.tau, view.prior)


@dataclass
class SlotLog:
    slot: int
    I: int
    l: float
    window_objective: float
    status: str
    fallback: bool
    violating: bool = False
    recomputed: bool = False


@dataclass(eq=False)
class OnlineResult:
    policy: Policy
    report: EnergyReport
    log: list[SlotLog]
    violations: list[Violation]

    @property
    def flagged(self) -> list[int]:
        return [s.slot for s in self.log if s.violating]

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def energy(self) -> float:
        return self.report.total if self.feasible else float("inf")


def _single_slot(scenario: Scenario, i: int, I_i: int, committed: list[int]):
    """Best split for slot ``i`` (1-based) against its realised input."""
    hist = np.array([0, 0] + committed[:i - 1] + [I_i], dtype=np.int8)
    D = effective_inputs(np.array([scenario.L[i - 1]]), hist[-1:], scenario.cache.tau,
                         prior=hist[:-1])[0]
    k = i - 1
    l, ok = best_split(np.array([D]), np.array([I_i]), scenario.R[k:k + 1],
                       scenario.p[k:k + 1], scenario.r_off[k:k + 1],
                       scenario.r_up[k:k + 1], scenario.sys)
    return float(l[0]), ok, float(D)


def run_online(scenario: Scenario, config: OnlineConfig | int) -> OnlineResult:
    """Run the receding-horizon controller over the realised scenario."""
    if isinstance(config, int):
        config = OnlineConfig(config)
    S = config.S
    committed: list[int] = []
    l_out: list[float] = []
    records: list[SlotLog] = []
    for i in range(1, scenario.N + 1):
        view = make_window(scenario, i, S, committed)
        data = window_sdp(view, scenario)
        sol = solve_relaxation(data, config.options)
        status = str(sol.status)
        fallback = not sol.ok
        I_i = 0
        if sol.ok:
            I_w = round_caching(sol.A)
            D_w = effective_inputs(view.L, I_w, scenario.cache.tau, prior=view.prior)
            l_w, _ = best_split(D_w, I_w, data.R, data.p, data.r_off, data.r_up, scenario.sys)
            I_i = int(I_w[0])
            l_i, ok, _ = _single_slot(scenario, i, I_i, committed)
            if not ok and I_i == 1:
                fallback, status, I_i = True, "RoundedInfeasible", 0
            recomputed = bool(l_i != l_w[0])
            if recomputed:
                log.debug("slot %d: split recomputed %.6g -> %.6g", i, l_w[0], l_i)
        if fallback:
            recomputed = False
            l_i, ok, _ = _single_slot(scenario, i, 0, committed)
        violating = not ok
        if violating:
            _, _, D = _single_slot(scenario, i, I_i, committed)
            l_i = min(max(l_i, 0.0), D)
            log.info("slot %d: no split meets the deadlines", i)
        committed.append(I_i)
        l_out.append(l_i)
        records.append(SlotLog(i, I_i, l_i, sol.objective, status, fallback,
                               violating, recomputed))
    policy = Policy(np.array(committed, dtype=np.int8), np.array(l_out))
    return OnlineResult(policy, total_weighted_energy(scenario, policy), records,
                        check_feasible(scenario, policy))


LOG_COLUMNS = ("slot", "I", "l", "window_objective", "status", "fallback")


def write_decision_log(result: OnlineResult, fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for s in result.log:
        w.writerow([s.slot, s.I, repr(s.l), repr(s.window_objective), s.status, int(s.fallback)])
