"""Average energy against the deadline and against the prediction error.

A reduced version of the two sweeps (fewer realisations, so it runs in
well under a minute); the CLI runs the full ones:

    python -m fogcache sweep-deadline --realizations 500 --plot --out results/
    python -m fogcache sweep-sigma --realizations 500 --plot --out results/

    python demos/03_sweeps.py
"""
from fogcache.harness import load_config, sweep_deadline, sweep_error_std


def table(rows, label):
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    print(f"\n{label:>10} " + " ".join(f"{s:>12}" for s in schemes) + "      n")
    for x in dict.fromkeys(r.sweep_var for r in rows):
        cells = {r.scheme: r for r in rows if r.sweep_var == x}
        print(f"{x:>10.4g} " + " ".join(f"{cells[s].mean_energy_J:>12.5f}" for s in schemes)
              + f"  {cells[schemes[0]].n:>5}")


cfg = load_config("default", realizations=20)
table(sweep_deadline(cfg), "T (s)")
table(sweep_error_std(cfg.replace(T=0.3)), "sigma")
print("\nmeans are over realisations where every scheme is feasible (column n)")
