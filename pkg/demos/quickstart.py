"""Run the shipped logistic benchmark and print how the gaps evolve.

Usage: python3 demos/quickstart.py
"""

from pathlib import Path

from rpp.experiment import load_config, run_experiment

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "logistic_benchmark.json"

cfg = load_config(CONFIG).with_value("run.trace_path", None)
print(f"{cfg.graph['n']} nodes, radius {cfg.graph['radius']}, "
      f"{cfg.problem['m']} samples per node in dimension {cfg.problem['d']}")

result = run_experiment(cfg, write=False)
rows = result.trace.rows

# print a handful of rows spread over the run
shown = rows[:: max(1, len(rows) // 8)]
for row in shown + ([rows[-1]] if shown[-1] is not rows[-1] else []):
    print(f"k={row.k:5d}  rounds={row.comm_rounds:6d}  optimality gap={row.optimality_gap:.3e}  "
          f"consensus error={row.consensus_err:.3e}")

print(f"status: {result.status} after {len(rows)} iterations")
a4 = result.summary["perturbation_bounds"]
print(f"perturbation norm-bound violations: {a4['counts']['e_norm'] + a4['counts']['r_norm']}")
print(f"difference-bound violation rate per node check: {a4['diff_violation_rate']:.3f}")
