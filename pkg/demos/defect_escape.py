"""
A pair defect: stuck for single flips, not for the machine
==========================================================

On a 2x2 grid with one pixel per row and column, filling the whole top row
leaves both columns right and both rows wrong.  No single flip raises the
cut, so 1-opt local search stops here.  The relaxed dynamics move the two
offending right-column spins together and flip them as a pair.
"""
import numpy as np

from v2tomo.analysis import build_defect_fixture, cut_value, max_cut_bound, ray_charges
from v2tomo.dynamics import drift_rate_of_subset, run_machine
from v2tomo.localsearch import flip_gains, local_search_1opt
from v2tomo.model import MachineConfig
from v2tomo.problem import assemble_charges

fx = build_defect_fixture()
inst, state = fx.instance, fx.state
print("spins", state.sigma.tolist(), "ray charges", ray_charges(inst, state.sigma).tolist())
print("single-flip gains", flip_gains(inst, state.sigma).tolist())
print("cut", cut_value(inst, state.sigma), "of", max_cut_bound(inst))

stuck = local_search_1opt(inst, seed=0, initial_sigma=state.sigma)
print("\n1-opt from here: solved", stuck.solved, "after", stuck.flips, "moves")

charges = assemble_charges(inst, state.sigma)
pair = charges.vector(fx.alpha) + charges.vector(fx.beta)
rate = drift_rate_of_subset(state, charges, [fx.alpha, fx.beta])
print(f"combined drift of the pair {rate:.6f} = |q_alpha + q_beta|^2 = {pair @ pair:.6f}")

report = run_machine(inst, MachineConfig(5.0, 600, 0, seed=0), initial_state=state)
print("\nmachine from the same state: solved", report.solved,
      "spins", report.final_sigma.tolist())
