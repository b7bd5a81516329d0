import io
import math

import numpy as np
import pytest

from fogcache.harness import (CSV_COLUMNS, ConfigError, aggregate, evaluate_schemes,
                              generate_scenario, load_config, read_sweep_csv,
                              realization_rng, run_sweep, scheme_names,
                              sweep_deadline, write_sweep_csv)
from fogcache.model import offload_rate


def test_zero_sigma_means_exact_prediction():
    cfg = load_config(None, sigma=0.0)
    sc = generate_scenario(cfg, realization_rng(0, 3, 0))
    assert np.array_equal(sc.L, sc.L_hat)


def test_same_seed_same_scenario():
    cfg = load_config(None, sigma=5e4)
    a = generate_scenario(cfg, realization_rng(9, 1, 0))
    b = generate_scenario(cfg, realization_rng(9, 1, 0))
    for name in ("L", "L_hat", "R", "h", "g", "p"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = generate_scenario(cfg, realization_rng(9, 2, 0))
    assert not np.array_equal(a.L_hat, c.L_hat)


def test_sigma_only_moves_the_true_lengths():
    cfg = load_config(None)
    a = generate_scenario(cfg, realization_rng(0, 0, 0), sigma=1e4)
    b = generate_scenario(cfg, realization_rng(0, 0, 0), sigma=1e5)
    for name in ("L_hat", "R", "h", "g"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    # the error is a fixed quantile scaled by sigma, wherever the truncation
    # point lies more than six standard deviations below the prediction
    cfg = cfg.replace(N=40)
    a = generate_scenario(cfg, realization_rng(0, 0, 0), sigma=1e4)
    b = generate_scenario(cfg, realization_rng(0, 0, 0), sigma=1e5)
    ok = a.L_hat > 6e5 + 1
    assert ok.sum() >= 5
    np.testing.assert_allclose((b.L - b.L_hat)[ok], 10 * (a.L - a.L_hat)[ok], rtol=1e-5)


def test_truncation_keeps_lengths_positive():
    cfg = load_config(None, N=200, L_range=[1e5, 1e5 + 1], sigma=1e6)
    sc = generate_scenario(cfg, realization_rng(0, 0, 0))
    assert sc.L.min() >= 1.0
    assert (sc.L < sc.L_hat).any() and (sc.L > sc.L_hat).any()


def test_distribution_ranges():
    cfg = load_config(None, N=1000)
    sc = generate_scenario(cfg, realization_rng(1, 0, 0))
    assert sc.L_hat.min() >= 1e5 and sc.L_hat.max() <= 1e6
    assert sc.R.min() >= 1e5 and sc.R.max() <= 1e6
    assert np.all(sc.p == pytest.approx(10 ** 2.4 * 1e-3))


def test_single_antenna_mean_snr():
    cfg = load_config(None, N=100_000, M=1)
    sc = generate_scenario(cfg, realization_rng(2, 0, 0))
    snr = sc.p * sc.h
    # 24 dBm - 117 dB against -174 dBm/Hz over 2.5 MHz: about 50 (17 dB)
    expected = 10 ** ((24 - 117 + 174 - 10 * math.log10(2.5e6)) / 10)
    assert expected == pytest.approx(50.4, rel=0.01)
    assert snr.mean() == pytest.approx(expected, rel=0.02)
    # exponential power for one Rayleigh tap
    assert np.std(snr) == pytest.approx(expected, rel=0.03)


def test_three_antenna_offload_rates():
    cfg = load_config(None, N=10_000)
    sc = generate_scenario(cfg, realization_rng(3, 0, 0))
    assert 1.2e7 <= np.median(sc.r_off) <= 2.0e7
    assert np.array_equal(sc.r_off, offload_rate(sc.p, sc.h, cfg.B_off))


# --- config ---------------------------------------------------------------------

def test_builtin_configs():
    d = load_config("default")
    assert (d.N, d.M, d.T, d.realizations) == (10, 3, 0.3, 500)
    assert d.tau == (0.5, 0.75) and d.windows == (4, 6)
    s = load_config("small")
    assert s.N == 8 and s.T == 0.35
    assert load_config("small", seed=4).seed == 4


def test_yaml_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("N: 6\nT: 0.4\nwindows: [2, 3]\nsigma_grid: [0, 1.0e4]\n")
    cfg = load_config(p)
    assert cfg.N == 6 and cfg.windows == (2, 3) and cfg.sigma_grid == (0, 1e4)
    assert load_config(p, realizations=3).realizations == 3


@pytest.mark.parametrize("text", [
    "N: 6\nbogus: 1\n",
    "N: 4\nwindows: [6]\n",
    "L_range: [1.0e6, 1.0e5]\n",
    "alpha1: 0.9\n",
    "realizations: 0\n",
    "sigma: -1\n",
    "tau: [0.9, 0.5]\n",
    "N: {a: 1}\n",
    "- 1\n- 2\n",
    "N: [\n",
])
def test_config_errors(tmp_path, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


# --- aggregation and CSV ----------------------------------------------------------

def test_aggregate_uses_mutually_feasible_realisations():
    inf = np.inf
    E = np.array([[1.0, 2.0], [3.0, inf], [5.0, 6.0], [inf, inf]])
    rows = aggregate(0.3, E, ["a", "b"])
    assert [r.n for r in rows] == [2, 2]
    assert rows[0].mean_energy_J == 3.0 and rows[1].mean_energy_J == 4.0
    assert rows[0].infeasible_rate == 0.25 and rows[1].infeasible_rate == 0.5
    assert rows[0].stderr_J == pytest.approx(np.std([1, 5], ddof=1) / np.sqrt(2))
    empty = aggregate(0.3, np.full((2, 1), inf), ["a"])[0]
    assert empty.n == 0 and math.isnan(empty.mean_energy_J)


def test_csv_round_trip():
    rows = aggregate(0.35, np.array([[0.1, 0.2], [0.3, 0.25]]), ["x", "y"])
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    assert buf.getvalue().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert read_sweep_csv(io.StringIO(buf.getvalue())) == rows


# --- sweeps -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_cfg():
    return load_config(None, N=6, windows=[2, 3], realizations=4, seed=5,
                       T_grid=[0.3, 0.35, 0.4], sigma_grid=[0.0, 5e4])


def test_one_point_grid_reproduces_single_run(small_cfg):
    cfg = small_cfg.replace(realizations=1)
    schemes = scheme_names(cfg.windows)
    rows, raw = run_sweep(cfg, "T", [0.35], schemes)
    sc = generate_scenario(cfg, realization_rng(cfg.seed, 0, 0), T=0.35)
    single = evaluate_schemes(sc, cfg.windows, realization_rng(cfg.seed, 0, 1))
    assert raw[0.35][0].tolist() == [single[s].energy for s in schemes]
    if rows[0].n:
        assert [r.mean_energy_J for r in rows] == [single[s].energy for s in schemes]


def test_deadline_sweep_shape_and_order(small_cfg):
    rows, raw = sweep_deadline(small_cfg, with_raw=True)
    schemes = scheme_names(small_cfg.windows)
    assert len(rows) == len(small_cfg.T_grid) * len(schemes)
    assert [r.scheme for r in rows[:len(schemes)]] == schemes
    for T in small_cfg.T_grid:
        by = {r.scheme: r for r in rows if r.sweep_var == T}
        if by["offline"].n:
            assert by["lower_bound"].mean_energy_J <= by["offline"].mean_energy_J * (1 + 1e-9)
            assert by["offline"].mean_energy_J <= by["none"].mean_energy_J * (1 + 1e-9)
    # pathwise: the relaxed bound never increases with T
    lb = np.array([raw[T][:, 0] for T in small_cfg.T_grid])
    finite = np.all(np.isfinite(lb), axis=0)
    assert np.all(np.diff(lb[:, finite], axis=0) <= 1e-8)


def test_parallel_sweep_is_identical(small_cfg):
    cfg = small_cfg.replace(realizations=2, T_grid=[0.35])
    a = sweep_deadline(cfg)
    b = sweep_deadline(cfg.replace(workers=2))
    assert a == b


def test_evaluate_schemes_flags_infeasible():
    from conftest import hand_scenario
    sc = hand_scenario([1.2e6] * 3, T=0.05)
    res = evaluate_schemes(sc, [2], 0, oracle=True)
    assert set(res) == {"lower_bound", "offline", "online_S2", "random", "none", "all", "oracle"}
    assert all(not r.feasible and r.energy == np.inf for r in res.values())
    assert res["lower_bound"].status == "PrimalInfeasible"
    assert res["online_S2"].flagged == 3


def test_curves_share_realisations_and_fall_with_deadline(small_cfg):
    cfg = small_cfg.replace(realizations=8, T_grid=[0.34, 0.37, 0.4])
    rows = sweep_deadline(cfg)
    assert {r.n for r in rows} == {4}
    for scheme in ("lower_bound", "random", "none", "all"):
        means = [r.mean_energy_J for r in rows if r.scheme == scheme]
        assert all(b <= a + 1e-12 for a, b in zip(means, means[1:])), scheme
    # per-value aggregation is still available
    per_value, _ = run_sweep(cfg, "T", cfg.T_grid, scheme_names(cfg.windows), common=False)
    assert [r.n for r in per_value] >= [r.n for r in rows]
