"""
How long should a stage last?
=============================

Each stage keeps 600 Euler steps and the run gets 5 agitations, so a longer
stage also means a coarser step.
"""
from v2tomo.bench import ExperimentSpec, run_experiment

grid = (1.0, 2.0, 3.5, 5.0)
spec = ExperimentSpec(kind="t_sweep", sizes=(5, 10), t_grid=grid, images_per_size=3,
                      restarts=30, methods=("v2",))
table = {(int(r["W"]), float(r["T"])): float(r["p_succ"]) for r in run_experiment(spec)}
print("   W " + "".join(f"  T={t:<4}" for t in grid))
for W in spec.sizes:
    print(f"{W:4d} " + "".join(f"  {table[W, t]:6.3f}" for t in grid))
