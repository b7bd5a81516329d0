"""System model: rates, cache-reduced task inputs, energy terms and deadlines.

All quantities are SI: bits, seconds, watts, joules, hertz. Slot indices in
user-facing output (violations, logs) are 1-based; arrays are 0-based.

Most functions accept either a single caching vector of shape ``(N,)`` or a
batch of shape ``(K, N)``; the exhaustive oracle relies on the batched form.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "SystemParams",
    "CacheModel",
    "SlotParams",
    "Scenario",
    "Policy",
    "EnergyReport",
    "SlotEnergy",
    "Violation",
    "ZeroRateError",
    "offload_rate",
    "upload_rate",
    "effective_input",
    "effective_inputs",
    "slot_energy",
    "energy_terms",
    "total_weighted_energy",
    "check_feasible",
    "offload_coefficient",
    "offload_window",
    "optimal_offload_given_caching",
    "best_split",
]


class ZeroRateError(ValueError):
    """Raised when bits must cross a link whose rate is zero."""


@dataclass(frozen=True)
class SystemParams:
    """Horizon, deadline, weights and hardware constants.

    Defaults are the numerical-results constants: 800 MHz UT CPU, 2 GHz
    edge CPU, 1e3 cycles/bit on both sides, capacitance 1e-28, 2.5 MHz
    for each of the two FDMA bands and weights 0.85 / 0.15.
    """

    N: int
    T: float
    alpha1: float = 0.85
    alpha0: float = 0.15
    kappa_loc: float = 1e-28
    kappa_e: float = 1e-28
    c_loc: float = 1e3
    c_e: float = 1e3
    f_loc: float = 8e8
    f_e: float = 2e9
    B_off: float = 2.5e6
    B_up: float = 2.5e6

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not (0.0 <= self.alpha1 <= 1.0 and 0.0 <= self.alpha0 <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.alpha1 + self.alpha0 - 1.0) > 1e-12:
            raise ValueError("alpha1 + alpha0 must equal 1")
        for name in ("T", "kappa_loc", "kappa_e", "c_loc", "c_e", "f_loc",
                     "f_e", "B_off", "B_up"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def remote_seconds_per_bit(self) -> float:
        return self.c_e / self.f_e

    @property
    def local_bits_per_second(self) -> float:
        return self.f_loc / self.c_loc

    @property
    def local_joules_per_bit(self) -> float:
        return self.kappa_loc * self.c_loc * self.f_loc**2

    @property
    def remote_joules_per_bit(self) -> float:
        return self.kappa_e * self.c_e * self.f_e**2


@dataclass(frozen=True)
class CacheModel:
    """Reduction factors ``tau[k-1]`` for a result cached ``k`` slots ago."""

    tau: tuple[float, ...] = (0.5, 0.75)

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau)
        object.__setattr__(self, "tau", tau)
        if len(tau) < 1:
            raise ValueError("tau needs at least one entry")
        if any(t < 0.0 or t > 1.0 for t in tau):
            raise ValueError("tau entries must lie in [0, 1]")
        if any(b < a for a, b in zip(tau, tau[1:])):
            raise ValueError("tau must be non-decreasing")

    @property
    def r(self) -> int:
        return len(self.tau)


@dataclass(frozen=True)
class SlotParams:
    L: float
    L_hat: float
    R: float
    h: float
    g: float
    p: float

    @property
    def delta_L(self) -> float:
        return self.L - self.L_hat


def _vec(x, n: int, name: str) -> np.ndarray:
    a = np.array(x, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """A full horizon: constants plus per-slot true/predicted parameters.

    Per-slot parameters are stored column-wise as read-only arrays.
    """

    sys: SystemParams
    cache: CacheModel
    L: np.ndarray
    L_hat: np.ndarray
    R: np.ndarray
    h: np.ndarray
    g: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        n = self.sys.N
        for name in ("L", "L_hat", "R", "h", "g", "p"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        if np.any(self.L <= 0) or np.any(self.L_hat <= 0):
            raise ValueError("task lengths must be positive")
        if np.any(self.R < 0) or np.any(self.h < 0) or np.any(self.g < 0):
            raise ValueError("R, h and g must be nonnegative")
        if np.any(self.p <= 0):
            raise ValueError("transmit power must be positive")

    @classmethod
    def from_slots(cls, sys: SystemParams, cache: CacheModel,
                   slots: Sequence[SlotParams]) -> "Scenario":
        if len(slots) != sys.N:
            raise ValueError(f"expected {sys.N} slots, got {len(slots)}")
        cols = {k: [getattr(s, k) for s in slots]
                for k in ("L", "L_hat", "R", "h", "g", "p")}
        return cls(sys, cache, **cols)

    @property
    def N(self) -> int:
        return self.sys.N

    @property
    def slots(self) -> list[SlotParams]:
        return [self.slot(i) for i in range(self.N)]

    def slot(self, i: int) -> SlotParams:
        """Parameters of slot ``i`` (0-based)."""
        return SlotParams(float(self.L[i]), float(self.L_hat[i]),
                          float(self.R[i]), float(self.h[i]),
                          float(self.g[i]), float(self.p[i]))

    @property
    def r_off(self) -> np.ndarray:
        return offload_rate(self.p, self.h, self.sys.B_off)

    @property
    def r_up(self) -> np.ndarray:
        return upload_rate(self.p, self.g, self.sys.B_up)

    def with_deadline(self, T: float) -> "Scenario":
        return replace(self, sys=replace(self.sys, T=T))

    def with_cache(self, cache: CacheModel) -> "Scenario":
        return replace(self, cache=cache)

    def predicted(self) -> "Scenario":
        """Same scenario with the true lengths replaced by the predictions."""
        return replace(self, L=self.L_hat)


@dataclass(frozen=True, eq=False)
class Policy:
    I: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        I = np.asarray(self.I)
        if np.any((I != 0) & (I != 1)):
            raise ValueError("caching decisions must be binary")
        object.__setattr__(self, "I", I.astype(np.int8))
        object.__setattr__(self, "l", np.asarray(self.l, dtype=float))
        if self.I.shape != self.l.shape:
            raise ValueError("I and l must have the same length")


class SlotEnergy(NamedTuple):
    E_loc: float
    E_off: float
    E_up: float
    E_remote: float


@dataclass(frozen=True, eq=False)
class EnergyReport:
    E_loc: np.ndarray
    E_off: np.ndarray
    E_up: np.ndarray
    E_remote: np.ndarray
    weighted: np.ndarray
    total: float

    def as_dict(self) -> dict:
        return {
            "E_loc": self.E_loc.tolist(),
            "E_off": self.E_off.tolist(),
            "E_up": self.E_up.tolist(),
            "E_remote": self.E_remote.tolist(),
            "weighted": self.weighted.tolist(),
            "total": self.total,
        }


@dataclass(frozen=True)
class Violation:
    constraint: str  # remote_deadline, local_deadline, split_range or binary
    slot: int  # 1-based
    excess: float = field(default=0.0, compare=False)


def offload_rate(p, h, B_off):
    """Achievable offloading rate ``B_off * log2(1 + p*h)`` in bits/s."""
    return B_off * np.log2(1.0 + np.multiply(p, h))


def upload_rate(p, g, B_up):
    """Results-upload rate, same Shannon form over the upload band."""
    return B_up * np.log2(1.0 + np.multiply(p, g))


def effective_input(L: float, history: Sequence[int], tau: Sequence[float]) -> float:
    """Bits left to execute at a slot given earlier caching decisions.

    ``history`` lists the decisions of the previous slots, most recent
    first (``I[i-1], I[i-2], ...``); missing entries count as not cached.
    Only the most recent cached result within ``len(tau)`` slots helps.
    """
    for k, t in enumerate(tau):
        if k < len(history) and history[k]:
            return L * t
    return float(L)


def effective_inputs(L, I, tau: Sequence[float], prior: Sequence[int] = ()) -> np.ndarray:
    """Vectorised :func:`effective_input` over a horizon.

    ``I`` has shape ``(N,)`` or ``(K, N)``. ``prior`` holds decisions taken
    before the first slot in chronological order (``..., I[-1], I[0]``);
    anything earlier is taken as not cached.
    """
    I = np.asarray(I, dtype=bool)
    squeeze = I.ndim == 1
    I = np.atleast_2d(I)
    K, N = I.shape
    r = len(tau)
    pre = np.zeros(r, dtype=bool)
    prior = np.asarray(prior, dtype=bool)[-r:] if len(prior) else np.zeros(0, bool)
    if prior.size:
        pre[r - prior.size:] = prior
    full = np.concatenate([np.broadcast_to(pre, (K, r)), I], axis=1)
    factor = np.ones((K, N))
    open_ = np.ones((K, N), dtype=bool)
    for k in range(1, r + 1):
        prev = full[:, r - k:r - k + N]
        hit = open_ & prev
        factor[hit] = tau[k - 1]
        open_ &= ~prev
    D = np.asarray(L, dtype=float) * factor
    return D[0] if squeeze else D


def energy_terms(D, l, I, R, p, r_off, r_up, sys: SystemParams):
    """Per-slot (E_loc, E_off, E_up, E_remote) arrays; broadcasts over batches."""
    D = np.asarray(D, dtype=float)
    l = np.asarray(l, dtype=float)
    I = np.asarray(I, dtype=float)
    off_bits = D - l
    up_bits = I * R
    if np.any((off_bits > 0) & (np.broadcast_to(r_off, off_bits.shape) == 0)):
        raise ZeroRateError("offloading over a zero-rate channel")
    if np.any((up_bits > 0) & (np.broadcast_to(r_up, up_bits.shape) == 0)):
        raise ZeroRateError("uploading results over a zero-rate channel")
    with np.errstate(divide="ignore", invalid="ignore"):
        E_off = np.where(off_bits != 0, p * off_bits / r_off, 0.0)
        E_up = np.where(up_bits != 0, p * up_bits / r_up, 0.0)
    E_loc = sys.local_joules_per_bit * l
    E_remote = sys.remote_joules_per_bit * off_bits
    return E_loc, E_off, E_up, E_remote


def slot_energy(slot: SlotParams, sys: SystemParams, D: float, l: float, I: int) -> SlotEnergy:
    r_off = offload_rate(slot.p, slot.h, sys.B_off)
    r_up = upload_rate(slot.p, slot.g, sys.B_up)
    terms = energy_terms(D, l, I, slot.R, slot.p, r_off, r_up, sys)
    return SlotEnergy(*(float(t) for t in terms))


def total_weighted_energy(scenario: Scenario, policy: Policy) -> EnergyReport:
    if policy.I.shape != (scenario.N,):
        raise ValueError("policy length does not match the horizon")
    sys = scenario.sys
    D = effective_inputs(scenario.L, policy.I, scenario.cache.tau)
    E_loc, E_off, E_up, E_remote = energy_terms(
        D, policy.l, policy.I, scenario.R, scenario.p,
        scenario.r_off, scenario.r_up, sys)
    weighted = sys.alpha1 * (E_loc + E_off + E_up) + sys.alpha0 * E_remote
    return EnergyReport(E_loc, E_off, E_up, E_remote, weighted, float(np.sum(weighted)))


def check_feasible(scenario: Scenario, policy: Policy) -> list[Violation]:
    """All deadline / range / binary violations of a policy (empty if feasible).

    Deadlines get an absolute slack of ``1e-9 * T`` seconds; the split range
    gets ``1e-9 * max(D, 1)`` bits.
    """
    sys = scenario.sys
    I = np.asarray(policy.I)
    l = np.asarray(policy.l, dtype=float)
    out: list[Violation] = []
    if I.shape != (scenario.N,) or l.shape != (scenario.N,):
        raise ValueError("policy length does not match the horizon")
    bad_binary = (I != 0) & (I != 1)
    Ib = np.where(bad_binary, 1, I)
    D = effective_inputs(scenario.L, Ib, scenario.cache.tau)
    r_off, r_up = scenario.r_off, scenario.r_up
    tol_t = 1e-9 * sys.T
    off_bits = D - l
    with np.errstate(divide="ignore", invalid="ignore"):
        t_remote = np.where(off_bits > 0, off_bits / r_off, 0.0) + sys.remote_seconds_per_bit * off_bits
        up_bits = Ib * scenario.R
        t_local = l / sys.local_bits_per_second + np.where(up_bits > 0, up_bits / r_up, 0.0)
    tol_b = 1e-9 * np.maximum(D, 1.0)
    for i in range(scenario.N):
        if t_remote[i] > sys.T + tol_t:
            out.append(Violation("remote_deadline", i + 1, float(t_remote[i] - sys.T)))
        if t_local[i] > sys.T + tol_t:
            out.append(Violation("local_deadline", i + 1, float(t_local[i] - sys.T)))
        if l[i] < -tol_b[i] or l[i] > D[i] + tol_b[i]:
            out.append(Violation("split_range", i + 1, float(max(-l[i], l[i] - D[i]))))
        if bad_binary[i]:
            out.append(Violation("binary", i + 1, float(I[i])))
    return out


def offload_coefficient(p, r_off, sys: SystemParams):
    """Marginal weighted energy of executing one more bit locally.

    Negative means local execution is cheaper than offloading that bit.
    """
    with np.errstate(divide="ignore"):
        return (sys.alpha1 * sys.local_joules_per_bit
                - sys.alpha1 * np.asarray(p, dtype=float) / r_off
                - sys.alpha0 * sys.remote_joules_per_bit)


def offload_window(D, I, R, r_off, r_up, sys: SystemParams):
    """Bounds ``(lo, hi)`` on the locally executed bits imposed by the deadlines."""
    D = np.asarray(D, dtype=float)
    I = np.asarray(I, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        remote_cap = sys.T / (1.0 / np.asarray(r_off, dtype=float) + sys.remote_seconds_per_bit)
        up_bits = I * R
        up_time = np.where(up_bits > 0, up_bits / r_up, 0.0)
    lo = np.maximum(0.0, D - remote_cap)
    hi = np.minimum(D, (sys.T - up_time) * sys.local_bits_per_second)
    return lo, hi


def optimal_offload_given_caching(scenario: Scenario, I) -> tuple[np.ndarray, bool]:
    """Energy-minimal local split for fixed caching decisions.

    With ``I`` fixed the problem is an LP that separates per slot, so each
    ``l_i`` sits at one end of its deadline window: the lower end when local
    execution is not cheaper (ties included), the upper end otherwise.
    """
    I = np.asarray(I)
    D = effective_inputs(scenario.L, I, scenario.cache.tau)
    return best_split(D, I, scenario.R, scenario.p, scenario.r_off, scenario.r_up, scenario.sys)


def best_split(D, I, R, p, r_off, r_up, sys: SystemParams):
    lo, hi = offload_window(D, I, R, r_off, r_up, sys)
    q = offload_coefficient(p, r_off, sys)
    l = np.where(q >= 0, lo, hi)
    ok = lo <= hi
    if l.ndim == 1:
        return l, bool(np.all(ok))
    return l, np.all(ok, axis=-1)
