"""Sliding-window online scheduling under prediction error.

The controller only knows the current task length exactly; later slots
use predictions. Each slot solves a window of S slots, commits the first
decision and moves on. This script runs S = 4 and S = 6 on one noisy
scenario and prints the per-slot decision log.

    python demos/02_online_window.py
"""
import io

from fogcache.harness import generate_scenario, load_config, realization_rng
from fogcache.online import make_window, run_online, write_decision_log
from fogcache.sdr import solve_offline

cfg = load_config("default", sigma=8e4)     # N = 10, T = 0.3 s
for k in range(100):
    sc = generate_scenario(cfg, realization_rng(cfg.seed, k, 0))
    off = solve_offline(sc)
    if off.recovered is not None and off.recovered.feasible:
        break
print(f"realisation {k}: prediction errors (kbit):", ((sc.L - sc.L_hat) / 1e3).round(1))

view = make_window(sc, sc.N, 4, [0] * (sc.N - 1))
print(f"window at the last slot reads slots {view.source.tolist()} (wrap-around)")

print(f"\noffline with exact lengths: {off.energy:.6f} J  (bound {off.lower_bound:.6f})")
for S in (4, 6):
    res = run_online(sc, S)
    print(f"\nonline S={S}: {res.energy:.6f} J, caching {res.policy.I.tolist()}")
    buf = io.StringIO()
    write_decision_log(res, buf)
    print(buf.getvalue().rstrip())
