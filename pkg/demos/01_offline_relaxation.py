"""Offline caching/offloading through the semidefinite relaxation.

Draws one scenario with the default constants, builds the lifted problem,
solves it, rounds the last column of the relaxed matrix and re-optimises
the offloading split. The exhaustive oracle shows how close that gets.

    python demos/01_offline_relaxation.py
"""
import numpy as np

from fogcache.harness import generate_scenario, load_config, realization_rng
from fogcache.model import effective_inputs
from fogcache.oracle import exhaustive_optimal, fixed_caching_policy
from fogcache.sdr import build_sdp, rank_certificate, solve_offline

np.set_printoptions(precision=3, suppress=True, linewidth=110)

cfg = load_config("small")          # N = 8 slots, T = 0.35 s
for k in range(100):                # first realisation with a feasible policy
    sc = generate_scenario(cfg, realization_rng(cfg.seed, k, 0))
    oracle = exhaustive_optimal(sc)
    if oracle.feasible:
        break
print(f"realisation {k}: N={sc.N}, T={sc.sys.T} s")
print("task lengths (kbit):", sc.L / 1e3)
print("offload rates (Mbit/s):", sc.r_off / 1e6)

# The lifted data: D_i = L_i Tr(A H_i) for the rank-one A = [I;1][I;1]^T.
data = build_sdp(sc)
print(f"\nlifted matrix size {data.n}x{data.n}; H_3 =\n{data.H[2]}")

off = solve_offline(sc)
A = off.relaxation.A
print(f"\nrelaxation: {off.relaxation.status}, rank {off.relaxation.rank}, "
      f"{off.relaxation.iterations} iterations")
print("last column of A  :", off.relaxation.last_column)
print("rounded caching   :", off.I_app)
pol = off.recovered.policy
D = effective_inputs(sc.L, pol.I, sc.cache.tau)
print("local share l/D   :", pol.l / D)

cert = rank_certificate(off.relaxation, sc, pol)
print("eigenvalues of A  :", cert.eigenvalues[:4], "...")

print("\nweighted energy (J)")
print(f"  relaxed bound     {off.lower_bound:.6f}")
print(f"  exhaustive oracle {oracle.energy:.6f}   I = {oracle.policy.I}")
print(f"  rounded + split   {off.energy:.6f}   gap {100 * (off.energy / oracle.energy - 1):.3f}%")
for mode, label in (("none", "no caching"), ("all", "all caching")):
    e = fixed_caching_policy(sc, mode).energy
    print(f"  {label:<17} {e:.6f}" if np.isfinite(e) else f"  {label:<17} infeasible")
