"""
Comparing methods
=================

CP weighs temperature deviation and energy volume, each against the worst
method in the comparison. First we feed in a set of reference results, then
we build a small table from our own rollouts.
"""

from sessmarl.baselines import UserOnlyScheme, heuristic_controller, train_user_only
from sessmarl.environment import SessHvacEnv
from sessmarl.evaluation import MetricsReport, comparison_table, report
from sessmarl.maddpg import TrainConfig, evaluate
from sessmarl.timeseries import sample_window, synth_series

reference = {
    "Heuristics": (0.109, 19.793),
    "User Only": (0.098, 11.791),
    "Centralized": (0.520, 15.531),
    "Proposed(10)": (0.117, 9.247),
    "Proposed(20)": (0.076, 11.438),
    "Proposed(25)": (0.081, 9.752),
}
table = comparison_table({m: [MetricsReport(a, t)] for m, (a, t) in reference.items()}, "spring")
print(table.to_text())
print()

series = synth_series("summer", seed=0)
window = sample_window(series, "summer", "eval")
env = SessHvacEnv()

heuristic = env.rollout(heuristic_controller(env), window)

# the buildings without storage are trained one at a time
cfg = TrainConfig(episodes=60, seed=0)
results = train_user_only(env, series, "summer", cfg)
user_only = evaluate([r.agents[0].policy for r in results], UserOnlyScheme(env), window)[0]

print(report({"heuristic": [heuristic], "user only": [user_only]}, "summer").to_text())
