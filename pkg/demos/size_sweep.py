"""
Success probability against image size
======================================

A reduced version of the benchmark table: random half-filled W x W images,
the machine against restarted 1-opt descent.  The full protocol is
``v2tomo bench size-sweep`` (W 4..12, 100 machine and 10^4 descent restarts).
"""
from v2tomo.bench import ExperimentSpec, run_experiment

spec = ExperimentSpec(kind="size_sweep", sizes=(4, 6, 8, 10), images_per_size=3,
                      restarts=30, local_search_restarts=2000)
print(f"{'W':>3} {'method':<13} {'P_succ':>7}  95% interval")
for row in run_experiment(spec):
    print(f"{row['W']:>3} {row['method']:<13} {float(row['p_succ']):7.3f}  "
          f"[{float(row['ci_lo']):.3f}, {float(row['ci_hi']):.3f}]")
