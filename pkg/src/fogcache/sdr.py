"""Semidefinite relaxation of the joint caching/offloading problem (r = 2).

The caching vector ``I`` is lifted to ``A = [I; 1][I; 1]^T``. With two-slot
correlation every effective input is affine in the entries of ``A``,
``D_i = L_i * Tr(A H_i)``, so energies and deadlines become linear in
``(A, l)``; dropping ``rank(A) = 1`` leaves an SDP whose optimum is a lower
bound on the true minimum energy.

The constant parts of the offloading and remote-execution energies live in
the bottom-right corners of ``F'`` and ``G'``, so the SDP objective at any
lifted binary point equals the true weighted energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, TextIO

import numpy as np

from . import conic
from .conic import ConicProblem, SolveStatus, SolverOptions
from .model import (EnergyReport, Policy, Scenario, SystemParams,
                    effective_inputs, optimal_offload_given_caching,
                    total_weighted_energy)

__all__ = [
    "SdpData",
    "SdpSolution",
    "PolicyResult",
    "RankReport",
    "OfflineResult",
    "lift",
    "pair_matrix",
    "build_sdp",
    "lifted_sdp",
    "solve_relaxation",
    "round_caching",
    "recover_policy",
    "numerical_rank",
    "rank_certificate",
    "threshold_repair",
    "solve_offline",
    "dump_sdp_data",
    "load_sdp_dump",
]

RANK_TOL = 1e-6


def lift(I) -> np.ndarray:
    a = np.append(np.asarray(I, dtype=float), 1.0)
    return np.outer(a, a)


def _unit(n: int, j: int) -> np.ndarray:
    e = np.zeros(n)
    e[j] = 1.0
    return e


def pair_matrix(n: int, a: int, b: int) -> np.ndarray:
    """Symmetric ``n x n`` matrix with 1/2 at (a, b) and (b, a); 0-based."""
    G = np.zeros((n, n))
    G[a, b] = G[b, a] = 0.5
    return G


def _border(top: np.ndarray, col: np.ndarray, corner: float) -> np.ndarray:
    """``[top, col/2; col^T/2, corner]``."""
    N = top.shape[0]
    M = np.zeros((N + 1, N + 1))
    M[:N, :N] = top
    M[:N, N] = M[N, :N] = 0.5 * col
    M[N, N] = corner
    return M


@dataclass(eq=False)
class SdpData:
    """Lifted problem description for a horizon (or a window) of ``horizon`` slots."""

    horizon: int
    F_prime: np.ndarray
    W: np.ndarray
    G_prime: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    s: np.ndarray
    E: np.ndarray  # (horizon, n, n)
    U: np.ndarray
    H: np.ndarray
    L: np.ndarray
    R: np.ndarray
    p: np.ndarray
    r_off: np.ndarray
    r_up: np.ndarray
    sys: SystemParams
    tau: tuple[float, ...]
    prior: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.horizon + 1

    @property
    def T(self) -> float:
        return self.sys.T

    def effective_inputs(self, A: np.ndarray) -> np.ndarray:
        return self.L * np.einsum("kij,ij->k", self.H, A)

    def objective_matrix(self) -> np.ndarray:
        sys = self.sys
        return (sys.alpha1 * (self.F_prime + self.W)
                + sys.alpha0 * sys.kappa_e * sys.f_e**2 * self.G_prime)

    def objective_vector(self) -> np.ndarray:
        sys = self.sys
        return (sys.alpha1 * (sys.local_joules_per_bit - self.u)
                - sys.alpha0 * sys.remote_joules_per_bit * np.ones(self.horizon))

    def objective(self, A: np.ndarray, l: np.ndarray) -> float:
        return float(np.sum(self.objective_matrix() * A) + self.objective_vector() @ l)

    def to_conic(self) -> tuple[ConicProblem, float, float]:
        """Scaled conic form; returns ``(problem, bit_scale, energy_scale)``.

        The vector variable is ``l / bit_scale`` and the objective is divided
        by ``energy_scale``; deadline rows are divided by ``T`` and range
        rows by ``L_i``.
        """
        N, n, sys, T = self.horizon, self.n, self.sys, self.sys.T
        beta = float(np.max(self.L))
        C = self.objective_matrix()
        c = self.objective_vector() * beta
        eps = max(np.abs(C).max(), np.abs(c).max(), 1e-300)
        k = 1.0 / self.r_off + sys.remote_seconds_per_bit
        ineq, eq = [], []
        for i in range(N):
            e = _unit(N, i)
            ineq.append((k[i] * self.L[i] / T * self.H[i], -k[i] * beta / T * e, 1.0))
            ineq.append((self.R[i] / self.r_up[i] / T * self.E[i],
                         beta / (sys.local_bits_per_second * T) * e, 1.0))
            ineq.append((-self.H[i], beta / self.L[i] * e, 0.0))
        for i in range(N):
            eq.append((self.U[i], None, 0.0))
        corner = np.zeros((n, n))
        corner[-1, -1] = 1.0
        eq.append((corner, None, 1.0))
        return ConicProblem(n, N, C / eps, c / eps, eq, ineq), beta, eps


def _rates(scenario: Scenario):
    r_off, r_up = scenario.r_off, scenario.r_up
    if np.any(r_off <= 0):
        raise ValueError("the relaxation needs positive offloading rates")
    if np.any((r_up <= 0) & (scenario.R > 0)):
        raise ValueError("the relaxation needs positive upload rates")
    return r_off, r_up


def _common(N, L, R, p, r_off, r_up):
    n = N + 1
    E = np.stack([_border(np.zeros((N, N)), _unit(N, i), 0.0) for i in range(N)])
    U = np.stack([_border(np.diag(_unit(N, i)), -_unit(N, i), 0.0) for i in range(N)])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(R > 0, p * R / r_up, 0.0)
    W = _border(np.zeros((N, N)), w, 0.0)
    u = p / r_off
    return n, E, U, w, W, u


def build_sdp(scenario: Scenario) -> SdpData:
    """Lifted data for the whole horizon, starting from an empty cache.

    Shares :func:`lifted_sdp` with the online windows so that a window
    covering the horizon from slot 1 is bit-identical to this instance.
    """
    if scenario.cache.r != 2:
        raise ValueError("the lifted construction supports two-slot correlation only")
    r_off, r_up = _rates(scenario)
    return lifted_sdp(scenario.L, scenario.R, scenario.p, r_off, r_up,
                      scenario.sys, scenario.cache.tau, ())


def lifted_sdp(L, R, p, r_off, r_up, sys: SystemParams, tau: Sequence[float],
               prior: Sequence[int] = ()) -> SdpData:
    """Lifted data assembled slot by slot from ``D_i = L_i Tr(A H_i)``.

    ``prior`` holds committed decisions preceding the first slot,
    chronologically (``..., I[-1], I[0]``); they enter ``H`` as constants.
    ``F'`` and ``G'`` are the weighted sums of the ``H_i``: in the interior
    this is ``(1 - tau2) * sum_i (p_i L_i / r_i) G_{i-2,i-1}`` plus the
    linear terms in ``v``, with ``sum_i p_i L_i / r_i`` in the corner.
    """
    if len(tau) != 2:
        raise ValueError("the lifted construction supports two-slot correlation only")
    t1, t2 = tau
    L, R, p, r_off, r_up = (np.asarray(x, dtype=float) for x in (L, R, p, r_off, r_up))
    N = len(L)
    n, E, U, w, W, u = _common(N, L, R, p, r_off, r_up)
    pre = [0, 0] + [int(x) for x in prior]
    pre = pre[-2:]  # [I[-1], I[0]]

    def ref(j):
        # slot j (0-based) -> ("var", index) or ("const", value)
        return ("var", j) if j >= 0 else ("const", pre[j])

    H = np.zeros((N, n, n))
    for i in range(N):
        Hi = H[i]
        Hi[N, N] = 1.0
        a, b = ref(i - 1), ref(i - 2)
        for coef, x in ((t1 - 1.0, a), (t2 - 1.0, b)):
            if x[0] == "var":
                Hi[x[1], N] += 0.5 * coef
                Hi[N, x[1]] += 0.5 * coef
            else:
                Hi[N, N] += coef * x[1]
        coef = 1.0 - t2
        if a[0] == "var" and b[0] == "var":
            Hi[a[1], b[1]] += 0.5 * coef
            Hi[b[1], a[1]] += 0.5 * coef
        elif a[0] == "var":
            Hi[a[1], N] += 0.5 * coef * b[1]
            Hi[N, a[1]] += 0.5 * coef * b[1]
        elif b[0] == "var":
            Hi[b[1], N] += 0.5 * coef * a[1]
            Hi[N, b[1]] += 0.5 * coef * a[1]
        else:
            Hi[N, N] += coef * a[1] * b[1]

    off = p * L / r_off
    F_prime = np.einsum("k,kij->ij", off, H)
    G_prime = np.einsum("k,kij->ij", sys.c_e * L, H)
    v = 2.0 * F_prime[:N, N]
    s = 2.0 * G_prime[:N, N]
    return SdpData(N, F_prime, W, G_prime, u, v, w, s, E, U, H,
                   L, R, p, r_off, r_up, sys, tuple(tau), tuple(pre))


@dataclass(eq=False)
class SdpSolution:
    status: SolveStatus
    A: np.ndarray
    l: np.ndarray
    objective: float
    rank: int
    gap: float = float("nan")
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def last_column(self) -> np.ndarray:
        return self.A[:-1, -1]


def numerical_rank(A: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    eig = np.linalg.eigvalsh(A)
    top = eig[-1]
    if not np.isfinite(top) or top <= 0:
        return 0
    return int(np.sum(eig > rel_tol * top))


def solve_relaxation(data: SdpData, options: SolverOptions | None = None,
                     backend=None) -> SdpSolution:
    problem, beta, _ = data.to_conic()
    sol = conic.solve(problem, options, backend)
    if not sol.ok:
        nan = float("nan")
        return SdpSolution(sol.status, sol.X, sol.l * beta, nan, 0, sol.gap, sol.iterations)
    A = 0.5 * (sol.X + sol.X.T)
    l = sol.l * beta
    return SdpSolution(sol.status, A, l, data.objective(A, l), numerical_rank(A),
                       sol.gap, sol.iterations)


def round_caching(A: np.ndarray) -> np.ndarray:
    """Binary caching decisions from the last column of the relaxed matrix."""
    col = np.clip(np.asarray(A)[:-1, -1], 0.0, 1.0)
    return (col >= 0.5).astype(np.int8)


class PolicyResult(NamedTuple):
    policy: Policy
    report: EnergyReport
    feasible: bool

    @property
    def energy(self) -> float:
        return self.report.total if self.feasible else float("inf")


def recover_policy(scenario: Scenario, I_app) -> PolicyResult:
    """Best offloading for fixed caching, evaluated through the energy model."""
    I_app = np.asarray(I_app, dtype=np.int8)
    l, feasible = optimal_offload_given_caching(scenario, I_app)
    if not feasible:
        D = effective_inputs(scenario.L, I_app, scenario.cache.tau)
        l = np.clip(l, 0.0, D)
    policy = Policy(I_app, l)
    return PolicyResult(policy, total_weighted_energy(scenario, policy), feasible)


class RankReport(NamedTuple):
    rank: int
    all_offloads_positive: bool
    eigenvalues: np.ndarray


def rank_certificate(solution: SdpSolution, scenario: Scenario, policy: Policy,
                     slack: float = 1e-6) -> RankReport:
    """Numerical rank of ``A`` and whether every slot offloads some bits.

    The low-rank guarantee applies when ``l_i < D_i`` holds strictly at
    every slot; here strictness means a margin above ``slack * D_i``.
    """
    D = effective_inputs(scenario.L, policy.I, scenario.cache.tau)
    positive = bool(np.all(D - policy.l > slack * D))
    eig = np.linalg.eigvalsh(solution.A)[::-1]
    return RankReport(numerical_rank(solution.A), positive, eig)


def threshold_repair(scenario: Scenario, A: np.ndarray) -> PolicyResult | None:
    """Best feasible vector among the threshold roundings of the last column.

    Candidates are ``[A(i, n) >= t]`` for every distinct column value ``t``
    plus the all-zero vector; returns ``None`` if none is feasible.
    """
    col = np.clip(np.asarray(A)[:-1, -1], 0.0, 1.0)
    best = None
    for t in [np.inf, *np.unique(col)[::-1]]:
        r = recover_policy(scenario, (col >= t).astype(np.int8))
        if r.feasible and (best is None or r.energy < best.energy):
            best = r
    return best


@dataclass(eq=False)
class OfflineResult:
    data: SdpData
    relaxation: SdpSolution
    I_app: np.ndarray | None
    recovered: PolicyResult | None
    repaired: bool = False

    @property
    def lower_bound(self) -> float:
        return self.relaxation.objective if self.relaxation.ok else float("inf")

    @property
    def energy(self) -> float:
        return self.recovered.energy if self.recovered is not None else float("inf")


def solve_offline(scenario: Scenario, options: SolverOptions | None = None,
                  backend=None, repair: bool = True) -> OfflineResult:
    """Relax, round the last column, then re-optimise the offloading split.

    When the rounded vector admits no feasible split, the best feasible
    threshold rounding of the same column is used instead (``repaired``).
    """
    data = build_sdp(scenario)
    sol = solve_relaxation(data, options, backend)
    if not sol.ok:
        return OfflineResult(data, sol, None, None)
    I_app = round_caching(sol.A)
    rec = recover_policy(scenario, I_app)
    if rec.feasible or not repair:
        return OfflineResult(data, sol, I_app, rec)
    fixed = threshold_repair(scenario, sol.A)
    if fixed is None:
        return OfflineResult(data, sol, I_app, rec)
    return OfflineResult(data, sol, fixed.policy.I, fixed, repaired=True)


_DUMP_FIELDS = ("F_prime", "W", "G_prime", "u", "v", "w", "s", "E", "U", "H")


def dump_sdp_data(data: SdpData, fp: TextIO) -> None:
    """Write the lifted matrices as row-major text blocks.

    Header ``sdpdata n=<n> slots=<N>``; each block starts with
    ``<name> <rows> <cols>`` (stacked matrices are named ``H[1]`` etc).
    """
    fp.write(f"sdpdata n={data.n} slots={data.horizon}\n")

    def block(name, M):
        M = np.atleast_2d(M)
        fp.write(f"{name} {M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fp.write(" ".join(repr(float(x)) for x in row) + "\n")

    for name in _DUMP_FIELDS:
        M = getattr(data, name)
        if M.ndim == 3:
            for i, Mi in enumerate(M, 1):
                block(f"{name}[{i}]", Mi)
        else:
            block(name, M)


def load_sdp_dump(fp: TextIO) -> dict[str, np.ndarray]:
    header = fp.readline().split()
    if not header or header[0] != "sdpdata":
        raise ValueError("not an sdpdata dump")
    out: dict[str, np.ndarray] = {}
    for k, v in (h.split("=") for h in header[1:]):
        out[k] = np.array(int(v))
    while True:
        line = fp.readline()
        if not line:
            break
        name, rows, cols = line.split()
        M = np.array([[float(x) for x in fp.readline().split()] for _ in range(int(rows))])
        out[name] = M.reshape(int(rows), int(cols))
    return out
