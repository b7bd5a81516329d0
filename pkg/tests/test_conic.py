import numpy as np
import pytest

from conftest import feasible_scenarios
from fogcache.conic import (ConicProblem, CvxoptBackend, SolveStatus, SolverOptions,
                            solve)
from fogcache.oracle import exhaustive_optimal
from fogcache.sdr import build_sdp, lift


def test_trace_minimisation_one_by_one():
    P = ConicProblem(1, 0, np.eye(1), None, [(np.eye(1), None, 1.0)])
    sol = solve(P)
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert sol.X[0, 0] == pytest.approx(1.0, abs=1e-7)


def test_vector_only_lp():
    # min x  s.t.  -x <= -3   (x >= 0 is implicit)
    P = ConicProblem(0, 1, None, np.array([1.0]), [], [(None, np.array([-1.0]), -3.0)])
    sol = solve(P)
    assert sol.ok
    assert sol.l[0] == pytest.approx(3.0, abs=1e-6)
    assert sol.objective == pytest.approx(3.0, abs=1e-6)


def test_two_by_two_known_optimum():
    # min X12 s.t. X11 = X22 = 1, X PSD  ->  X12 = -1
    C = np.array([[0, 0.5], [0.5, 0]])
    eqs = [(np.diag([1.0, 0.0]), None, 1.0), (np.diag([0.0, 1.0]), None, 1.0)]
    sol = solve(ConicProblem(2, 0, C, None, eqs))
    assert sol.ok
    assert sol.objective == pytest.approx(-1.0, abs=1e-6)
    assert np.linalg.eigvalsh(sol.X)[0] >= -1e-8 * np.abs(sol.X).max()


def test_infeasible_is_reported():
    # X11 = 1 and X11 <= 0.5 cannot both hold
    M = np.diag([1.0, 0.0])
    P = ConicProblem(2, 0, np.eye(2), None, [(M, None, 1.0)], [(M, None, 0.5)])
    sol = solve(P)
    assert sol.status is SolveStatus.PRIMAL_INFEASIBLE
    assert not sol.ok


def test_iteration_cap_is_not_silent():
    sc = feasible_scenarios(1, N=6, master=30)[0]
    P, _, _ = build_sdp(sc).to_conic()
    sol = solve(P, SolverOptions(max_iter=2))
    assert sol.status in (SolveStatus.MAX_ITERATIONS, SolveStatus.NUMERICAL_FAILURE)


def test_problem_validation():
    with pytest.raises(ValueError):
        ConicProblem(2, 0, np.array([[0, 1.0], [0, 0]]), None)
    with pytest.raises(ValueError):
        ConicProblem(2, 1, np.eye(2), np.zeros(1), [(np.eye(3), None, 0.0)])
    with pytest.raises(ValueError):
        ConicProblem(2, 1, np.eye(2), np.zeros(1), [(None, np.zeros(2), 0.0)])


def test_contract_holds_on_relaxations():
    for sc in feasible_scenarios(3, N=6, master=31):
        P, _, _ = build_sdp(sc).to_conic()
        sol = solve(P)
        assert sol.ok
        assert sol.gap <= 1e-7
        assert sol.residual <= 1e-7
        eig = np.linalg.eigvalsh(sol.X)
        assert eig[0] >= -1e-8 * np.abs(eig).max()


def test_deterministic():
    sc = feasible_scenarios(1, N=6, master=32)[0]
    P, _, _ = build_sdp(sc).to_conic()
    a, b = solve(P), CvxoptBackend().solve(P, SolverOptions())
    assert np.array_equal(a.X, b.X) and np.array_equal(a.l, b.l)
    assert a.objective == b.objective


def test_lifted_binary_points_are_feasible_and_bound_the_optimum():
    for sc in feasible_scenarios(3, N=4, master=33):
        data = build_sdp(sc)
        P, beta, eps = data.to_conic()
        opt = solve(P)
        orc = exhaustive_optimal(sc, keep_table=True)
        rows, energies = orc.table
        for I, e in zip(rows, energies):
            if not np.isfinite(e):
                continue
            from fogcache.model import optimal_offload_given_caching
            l, _ = optimal_offload_given_caching(sc, I)
            A = lift(I)
            assert P.residuals(A, l / beta) <= 1e-9
            assert P.objective_value(A, l / beta) * eps == pytest.approx(e, rel=1e-9)
            assert opt.objective * eps <= e * (1 + 1e-6)
