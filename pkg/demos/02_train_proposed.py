"""
Training the three agents
=========================

Two building agents and one storage agent learn together with centralized
critics. Each actor only ever sees its own four numbers. Pass the number of
episodes on the command line; 150 takes a couple of minutes.
"""

import sys

import numpy as np

from sessmarl.environment import SessHvacEnv
from sessmarl.evaluation import fraction_cheap_charging, summarize
from sessmarl.maddpg import ProposedScheme, TrainConfig, Trainer, actor_policies, evaluate
from sessmarl.timeseries import sample_window, synth_series

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 150
series = synth_series("spring", seed=0)
env = SessHvacEnv()
scheme = ProposedScheme(env)

cfg = TrainConfig(episodes=episodes, seed=0)
trainer = Trainer(scheme, series, "spring", cfg)
trainer.run(progress=lambda e, r: e % 25 == 0 and print(f"episode {e:4d}  returns {np.round(r, 1)}"))

# returns should climb well above the first noisy episodes
curves = trainer.learning_curves
print("first 10 mean:", np.round(curves[:10].mean(axis=0), 2))
print("last 50 mean: ", np.round(curves[-50:].mean(axis=0), 2))

# noise-free evaluation on the fixed window
window = sample_window(series, "spring", "eval")
trace = evaluate(actor_policies(trainer.agents), scheme, window)[0]
m = summarize(trace)
print(f"ATD {m.atd:.3f}  TEC {m.tec:.1f}  cost {m.cost.total:.2f}")
print(f"share of charging bought below the moving average: {fraction_cheap_charging(trace):.2f}")

trainer.save("demo-checkpoint")
print("checkpoint written to demo-checkpoint/")
