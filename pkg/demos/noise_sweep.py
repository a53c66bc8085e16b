"""Sweep the perturbation level on a small logistic network.

Usage: python3 demos/noise_sweep.py [workers]
"""

import sys

from rpp.experiment import parse_config, sweep

template = parse_config({
    "graph": {"type": "geometric", "n": 20, "radius": 0.4, "seed": 0},
    "problem": {"type": "logistic_nonconvex", "m": 50, "d": 5, "lambda": 0.001, "mu": 1.0, "seed": 0},
    "algorithm": {"variant": "rpp", "auto_params": False,
                  "manual": {"rho": 0.1, "alpha": 4.0, "beta": 2.0}},
    "run": {"max_iters": 4000, "gap_tol": 1e-5, "seed": 0, "stop_on": "optimality_gap"},
})

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
rows = sweep(template, "sigma", ["0", "0.1", "0.3"], [0, 1, 2], workers=workers)
print("sigma  seed  status     iterations  rounds")
for r in rows:
    print(f"{r['sigma']:<6} {r['seed']:<5} {r['status']:<10} {r['iters_to_tol'] or '-':>10}  "
          f"{r['comm_to_tol'] or '-':>6}")
