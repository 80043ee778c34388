"""
How good could it be?
=====================

On a two-hour window with every action restricted to {-1, 0, 1} kW the whole
decision tree fits in memory, so we can search it and compare controllers
with the true optimum of the joint objective.
"""

from sessmarl.baselines import heuristic_controller
from sessmarl.environment import SessHvacEnv
from sessmarl.evaluation import OracleInstance, dp_oracle, snap_to_grid, trace_cost
from sessmarl.timeseries import sample_window, synth_series

series = synth_series("winter", seed=0)
window = sample_window(series, "winter", "eval").head(2)
env = SessHvacEnv()

inst = OracleInstance(env, window, horizon=2)
print(f"searching {inst.n_nodes} nodes")
best = dp_oracle(inst, lam=0.3)
print(f"optimal cost {best.cost:.4f}")
for k, a in enumerate(best.actions):
    print(f"  hour {k}: P_g={a.P_g + 0.0} P_d={a.P_d + 0.0} c={a.c + 0.0}")  # + 0.0 drops negative zeros

# the rule-based controller, snapped onto the same grid, can only do worse
heur = heuristic_controller(env)
short = inst.short_env()
tr = short.rollout(lambda s, w: snap_to_grid(heur(s, w), inst.levels), window)
print(f"heuristic on the grid: {trace_cost(tr):.4f}")

# four hours would need 243^4 nodes, beyond the search bound
try:
    OracleInstance(env, sample_window(series, "winter", "eval").head(4), horizon=4).validate()
except ValueError as exc:
    print("refused:", exc)
