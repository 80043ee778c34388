"""
A day in the simulator
======================

Two buildings share one storage unit. We drive them with the rule-based
controller for four synthetic winter days and look at what happens.
"""

import numpy as np

from sessmarl.baselines import heuristic_controller
from sessmarl.environment import SessHvacEnv, discretize, DEFAULT_BUILDINGS
from sessmarl.evaluation import atd, monetary_cost, tec
from sessmarl.timeseries import sample_window, synth_series

# each building is a first-order RC model; one hour of forward Euler gives
# T' = d1 T + d2 P_d + d3 P_g + d4 T_out
for b in DEFAULT_BUILDINGS:
    d = discretize(b)
    print(f"R={b.R:g} C={b.C:g}:  d1={d.d1:.6f} d2={d.d2:.6f} d3={d.d3:.6f} d4={d.d4:.6f}")

# synthetic prices and temperatures stand in for the market data
series = synth_series("winter", seed=0)
window = sample_window(series, "winter", "eval")
print("eval window starts", window.start_timestamp, "with", len(window), "hours")

env = SessHvacEnv()
trace = env.rollout(heuristic_controller(env), window)

# the storage charges whenever the price dips under its moving average
cheap = trace.p < trace.p_bar
print(f"charging steps: {np.count_nonzero(trace.c)} of {trace.K}, all cheap: {np.all(cheap[trace.c > 0])}")
print(f"SOC range: {trace.soc.min():.2f} .. {trace.soc.max():.2f} kWh")

# energy bookkeeping closes exactly
lhs = trace.soc[-1] - trace.soc0
rhs = env.sess.delta_c * trace.c.sum() - trace.d.sum()
print(f"soc_K - soc_0 = {lhs:.6f}, charged - drawn = {rhs:.6f}")

cost = monetary_cost(trace)
print(f"ATD {atd(trace):.3f} C, TEC {tec(trace):.1f}, money {cost.total:.2f} "
      f"(grid {sum(cost.buildings):.2f} + storage {cost.sess:.2f})")
