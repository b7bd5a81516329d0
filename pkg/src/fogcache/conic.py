"""Small dense conic programs: one PSD block plus a nonnegative vector.

    minimize    <C, X> + c'l
    subject to  <M_k, X> + a_k'l  = b_k     (equalities)
                <M_k, X> + a_k'l <= b_k     (inequalities)
                X PSD,  l >= 0

The default backend hands the problem to cvxopt's primal-dual interior
point SDP solver and then re-checks the returned point against the
solution contract itself; a point that fails the check is never reported
as optimal.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

__all__ = [
    "SolveStatus",
    "ConicProblem",
    "ConicSolution",
    "SolverOptions",
    "ConicBackend",
    "CvxoptBackend",
    "solve",
]


class SolveStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"

    def __str__(self) -> str:
        return self.value


# A constraint row: (symmetric matrix or None, vector or None, rhs).
Row = tuple[Optional[np.ndarray], Optional[np.ndarray], float]


@dataclass
class ConicProblem:
    n_psd: int
    n_vec: int
    C: np.ndarray
    c: np.ndarray
    eq_constraints: list[Row] = field(default_factory=list)
    ineq_constraints: list[Row] = field(default_factory=list)

    def __post_init__(self):
        n, m = self.n_psd, self.n_vec
        self.C = np.zeros((n, n)) if self.C is None else np.asarray(self.C, dtype=float)
        self.c = np.zeros(m) if self.c is None else np.asarray(self.c, dtype=float)
        if self.C.shape != (n, n) or self.c.shape != (m,):
            raise ValueError("objective dimensions do not match the problem")
        if not np.allclose(self.C, self.C.T, rtol=0, atol=1e-14 * max(1.0, np.abs(self.C).max(initial=0))):
            raise ValueError("objective matrix must be symmetric")
        for rows in (self.eq_constraints, self.ineq_constraints):
            for M, a, _ in rows:
                if M is not None:
                    M = np.asarray(M)
                    if M.shape != (n, n):
                        raise ValueError("constraint matrix has the wrong dimension")
                    if not np.array_equal(M, M.T):
                        raise ValueError("constraint matrices must be symmetric")
                if a is not None and np.shape(a) != (m,):
                    raise ValueError("constraint vector has the wrong dimension")

    def _stack(self, rows: Sequence[Row]):
        """Rows as a dense operator on [svec(X); l] with unit-weight off-diagonals."""
        n, m = self.n_psd, self.n_vec
        iu = np.triu_indices(n)
        weight = np.where(iu[0] == iu[1], 1.0, 2.0)
        G = np.zeros((len(rows), len(iu[0]) + m))
        h = np.zeros(len(rows))
        for k, (M, a, b) in enumerate(rows):
            if M is not None:
                G[k, :len(iu[0])] = np.asarray(M, dtype=float)[iu] * weight
            if a is not None:
                G[k, len(iu[0]):] = a
            h[k] = b
        return G, h

    def objective_value(self, X: np.ndarray, l: np.ndarray) -> float:
        return float(np.sum(self.C * X) + self.c @ l)

    def residuals(self, X: np.ndarray, l: np.ndarray) -> float:
        """Largest relative constraint violation (rows scaled to unit max-norm)."""
        iu = np.triu_indices(self.n_psd)
        x = np.concatenate([X[iu], l])
        worst = float(max(0.0, -l.min(initial=0.0)))
        for rows, is_eq in ((self.eq_constraints, True), (self.ineq_constraints, False)):
            if not rows:
                continue
            G, h = self._stack(rows)
            scale = np.maximum(np.abs(G).max(axis=1), 1e-300)
            v = (G @ x - h) / scale
            hs = np.abs(h) / scale
            v = np.abs(v) if is_eq else np.maximum(v, 0.0)
            worst = max(worst, float(np.max(v / (1.0 + hs))))
        return worst


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iter: int = 200
    psd_floor: float = 1e-8


@dataclass
class ConicSolution:
    status: SolveStatus
    X: np.ndarray
    l: np.ndarray
    objective: float
    gap: float
    iterations: int
    residual: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class ConicBackend(Protocol):
    def solve(self, problem: ConicProblem, options: SolverOptions) -> ConicSolution: ...


class CvxoptBackend:
    """cvxopt ``solvers.sdp`` with row and objective equilibration."""

    def solve(self, problem: ConicProblem, options: SolverOptions) -> ConicSolution:
        from cvxopt import matrix, solvers

        n, m = problem.n_psd, problem.n_vec
        iu = np.triu_indices(n)
        nx = len(iu[0]) + m

        Gi, hi = problem._stack(problem.ineq_constraints)
        Ge, he = problem._stack(problem.eq_constraints)
        Gi, hi = _normalise_rows(Gi, hi)
        Ge, he = _normalise_rows(Ge, he)
        # l >= 0
        Gl = np.vstack([Gi, np.hstack([np.zeros((m, len(iu[0]))), -np.eye(m)])])
        hl = np.concatenate([hi, np.zeros(m)])

        Gs = np.zeros((n * n, nx))
        for k, (i, j) in enumerate(zip(*iu)):
            Gs[j * n + i, k] = -1.0
            Gs[i * n + j, k] = -1.0

        cobj = np.concatenate([problem.C[iu] * np.where(iu[0] == iu[1], 1.0, 2.0), problem.c])
        cscale = np.abs(cobj).max(initial=0.0) or 1.0
        cobj = cobj / cscale

        kwargs = dict(Gs=[matrix(Gs)], hs=[matrix(np.zeros((n, n)))]) if n else {}
        if Gl.shape[0]:
            kwargs.update(Gl=matrix(Gl), hl=matrix(hl))
        if Ge.shape[0]:
            kwargs.update(A=matrix(Ge), b=matrix(he))
        opts = {
            "show_progress": False,
            "maxiters": options.max_iter,
            "abstol": 1e-2 * options.gap_tol,
            "reltol": 1e-2 * options.gap_tol,
            "feastol": 1e-2 * options.feas_tol,
            "refinement": 2,
        }
        try:
            res = solvers.sdp(matrix(cobj), options=opts, **kwargs)
        except (ArithmeticError, ValueError) as exc:
            return _failure(problem, SolveStatus.NUMERICAL_FAILURE, 0, str(exc))

        iters = int(res.get("iterations", 0) or 0)
        if res["status"] == "primal infeasible":
            return _failure(problem, SolveStatus.PRIMAL_INFEASIBLE, iters)
        if res["x"] is None:
            return _failure(problem, SolveStatus.NUMERICAL_FAILURE, iters)

        x = np.array(res["x"]).ravel()
        X = np.zeros((n, n))
        X[iu] = x[:len(iu[0])]
        X = X + np.triu(X, 1).T
        l = x[len(iu[0]):]
        pobj = float(res["primal objective"])
        dobj = float(res["dual objective"]) if res["dual objective"] is not None else np.nan
        gap_abs = max(float(res["gap"] or 0.0), abs(pobj - dobj)) if np.isfinite(dobj) else np.inf
        gap = gap_abs / max(1.0, abs(pobj))
        residual = problem.residuals(X, l)

        eig = np.linalg.eigvalsh(X) if n else np.zeros(1)
        psd_ok = eig[0] >= -options.psd_floor * np.abs(eig).max()
        if psd_ok and gap <= options.gap_tol and residual <= options.feas_tol:
            status = SolveStatus.OPTIMAL
        elif iters >= options.max_iter:
            status = SolveStatus.MAX_ITERATIONS
        else:
            status = SolveStatus.NUMERICAL_FAILURE
        return ConicSolution(status, X, l, problem.objective_value(X, l),
                             gap, iters, residual)


def _normalise_rows(G: np.ndarray, h: np.ndarray):
    if not G.shape[0]:
        return G, h
    s = np.abs(G).max(axis=1)
    s[s == 0] = 1.0
    return G / s[:, None], h / s


def _failure(problem: ConicProblem, status: SolveStatus, iters: int, msg: str = "") -> ConicSolution:
    nan = float("nan")
    return ConicSolution(status, np.full((problem.n_psd,) * 2, nan),
                         np.full(problem.n_vec, nan), nan, nan, iters)


_DEFAULT_BACKEND = CvxoptBackend()


def solve(problem: ConicProblem, options: SolverOptions | None = None,
          backend: ConicBackend | None = None) -> ConicSolution:
    """Solve ``problem``; the returned status is the only success signal."""
    return (backend or _DEFAULT_BACKEND).solve(problem, options or SolverOptions())
