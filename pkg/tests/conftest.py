import numpy as np
import pytest

from fogcache.harness import generate_scenario, load_config, realization_rng
from fogcache.model import CacheModel, Scenario, SystemParams


def make_scenario(N=4, T=0.35, seed=0, sigma=0.0, tau=(0.5, 0.75), **cfg):
    config = load_config(None, N=N, T=T, sigma=sigma, tau=list(tau),
                         windows=[min(N, 4)], **cfg)
    return generate_scenario(config, realization_rng(seed, 0, 0))


def hand_scenario(L, R=None, h=7.0 / 0.251, g=7.0 / 0.251, p=0.251, T=0.3,
                  tau=(0.5, 0.75), L_hat=None):
    """Scenario with round numbers: by default ``p*h = p*g = 7`` -> 7.5e6 bit/s."""
    L = np.asarray(L, dtype=float)
    N = len(L)
    R = np.full(N, 2e5) if R is None else R
    full = lambda x: np.broadcast_to(np.asarray(x, dtype=float), (N,))
    return Scenario(SystemParams(N=N, T=T), CacheModel(tau), L,
                    L if L_hat is None else L_hat, full(R), full(h), full(g), full(p))


def feasible_scenarios(count, N=6, T=0.35, master=0, **kw):
    """First ``count`` scenarios (drawn in order) for which some policy is feasible."""
    from fogcache.oracle import exhaustive_optimal

    out, k = [], 0
    while len(out) < count:
        sc = make_scenario(N=N, T=T, seed=master * 1000 + k, **kw)
        k += 1
        if exhaustive_optimal(sc).feasible:
            out.append(sc)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
