import io
import itertools

import numpy as np
import pytest

from conftest import feasible_scenarios, make_scenario
from fogcache.model import Policy, best_split, check_feasible, effective_inputs, energy_terms
from fogcache.online import (LOG_COLUMNS, OnlineConfig, make_window, run_online,
                             window_sdp, write_decision_log)
from fogcache.sdr import build_sdp, lift, solve_offline


@pytest.fixture(scope="module")
def noisy():
    return make_scenario(N=6, seed=3, sigma=5e4)


def test_window_start(noisy):
    v = make_window(noisy, 1, 4, [])
    assert v.source.tolist() == [1, 2, 3, 4]
    assert v.L[0] == noisy.L[0]
    assert np.array_equal(v.L[1:], noisy.L_hat[1:4])
    assert v.prior == (0, 0)


def test_window_wraps_at_the_end(noisy):
    v = make_window(noisy, 6, 3, [0, 1, 0, 0, 1])
    assert v.source.tolist() == [6, 1, 2]
    assert v.L.tolist() == [noisy.L[5], noisy.L_hat[0], noisy.L_hat[1]]
    assert np.array_equal(v.h, noisy.h[[5, 0, 1]])
    assert v.prior == (0, 1)


def test_window_no_wrap_needed(noisy):
    v = make_window(noisy, 5, 2, [0, 0, 0, 1])
    assert v.source.tolist() == [5, 6]
    assert v.prior == (0, 1)


def test_window_bounds(noisy):
    with pytest.raises(ValueError):
        make_window(noisy, 0, 2, [])
    with pytest.raises(ValueError):
        make_window(noisy, 1, 7, [])


def test_fresh_window_has_exact_first_input(noisy):
    v = make_window(noisy, 3, 3, [0, 0])
    data = window_sdp(v, noisy)
    assert data.n == 4
    assert data.effective_inputs(lift([0, 0, 0]))[0] == noisy.L[2]
    assert np.array_equal(data.H[0], np.diag([0, 0, 0, 1.0]))


def test_committed_cache_couples_into_the_window(noisy):
    t1, t2 = noisy.cache.tau
    v = make_window(noisy, 3, 3, [0, 1])  # I[i-1] = 1, I[i-2] = 0
    data = window_sdp(v, noisy)
    H1, H2 = data.H[0], data.H[1]
    # slot 1 is a constant tau1 * L
    assert np.count_nonzero(H1) == 1 and H1[-1, -1] == t1
    # slot 2: constant 1 + (tau2 - 1) * 1, linear (tau1 - 1) + (1 - tau2) * 1 on I1
    assert H2[-1, -1] == pytest.approx(1 + (t2 - 1))
    assert 2 * H2[0, -1] == pytest.approx((t1 - 1) + (1 - t2))
    assert np.count_nonzero(H2[:-1, :-1]) == 0
    for I in itertools.product((0, 1), repeat=3):
        D = data.effective_inputs(lift(I))
        np.testing.assert_allclose(D, effective_inputs(v.L, I, noisy.cache.tau, prior=[0, 1]),
                                   rtol=1e-15)


@pytest.mark.parametrize("S", [2, 3, 4, 5])
def test_window_objective_is_window_energy(noisy, S):
    committed = [1, 0, 1]
    v = make_window(noisy, 4, S, committed)
    data = window_sdp(v, noisy)
    sys = noisy.sys
    for I in itertools.product((0, 1), repeat=S):
        I = np.array(I)
        D = effective_inputs(v.L, I, noisy.cache.tau, prior=v.prior)
        l, _ = best_split(D, I, data.R, data.p, data.r_off, data.r_up, sys)
        l = np.clip(l, 0, D)
        E_loc, E_off, E_up, E_rem = energy_terms(D, l, I, data.R, data.p, data.r_off, data.r_up, sys)
        true = float(np.sum(sys.alpha1 * (E_loc + E_off + E_up) + sys.alpha0 * E_rem))
        assert data.objective(lift(I), l) == pytest.approx(true, rel=1e-9)


def test_window_of_one_never_caches():
    for sc in feasible_scenarios(4, N=6, master=61, sigma=2e4):
        res = run_online(sc, OnlineConfig(1))
        assert res.policy.I.tolist() == [0] * 6


def test_full_window_first_slot_matches_offline():
    for sc in feasible_scenarios(4, N=6, master=62):
        off = solve_offline(sc)
        if off.recovered is None or not off.recovered.feasible:
            continue
        on = run_online(sc, 6)
        first = on.log[0]
        assert first.I == off.I_app[0]
        assert first.l == pytest.approx(off.recovered.policy.l[0], rel=1e-12)
        # the slot-1 window is the offline problem itself
        data = window_sdp(make_window(sc, 1, 6, []), sc)
        assert np.array_equal(data.F_prime, off.data.F_prime)
        assert np.array_equal(data.G_prime, off.data.G_prime)


def test_online_energy_between_bound_and_no_caching():
    from fogcache.oracle import fixed_caching_policy
    for sc in feasible_scenarios(3, N=6, master=63):
        on = run_online(sc, 4)
        off = solve_offline(sc)
        none = fixed_caching_policy(sc, "none")
        if on.feasible and none.feasible:
            assert off.lower_bound <= on.energy * (1 + 1e-6)


@pytest.mark.parametrize("sigma", [0.0, 5e4, 1e5])
def test_replay_is_feasible_outside_flagged_slots(sigma):
    for k in range(4):
        sc = make_scenario(N=8, seed=70 + k, sigma=sigma, T=0.3)
        res = run_online(sc, 4)
        flagged = set(res.flagged)
        assert {v.slot for v in res.violations} <= flagged
        assert res.feasible == (not flagged)


def test_causality():
    """Changing realised lengths after slot k leaves decisions up to k unchanged."""
    sc = make_scenario(N=6, seed=11, sigma=5e4)
    base = run_online(sc, 4)
    from dataclasses import replace
    L = sc.L.copy()
    L[3:] *= 1.3
    other = run_online(replace(sc, L=L), 4)
    assert base.policy.I[:3].tolist() == other.policy.I[:3].tolist()
    assert np.array_equal(base.policy.l[:3], other.policy.l[:3])


def test_fallback_when_window_is_infeasible():
    from conftest import hand_scenario
    sc = hand_scenario([1.2e6] * 3, T=0.05)
    res = run_online(sc, 2)
    assert all(s.fallback for s in res.log)
    assert res.flagged == [1, 2, 3]
    assert res.policy.I.tolist() == [0, 0, 0]
    assert res.energy == np.inf


def test_decision_log_csv(noisy):
    res = run_online(noisy, 3)
    buf = io.StringIO()
    write_decision_log(res, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 1 + noisy.N
    assert lines[1].startswith("1,")


def test_policy_replays_through_model(noisy):
    res = run_online(noisy, 3)
    assert check_feasible(noisy, Policy(res.policy.I, res.policy.l)) == res.violations
