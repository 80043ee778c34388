"""Comparison schemes: a rule-based controller, buildings without storage, and one centralized agent."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .environment import EnvState, JointAction, SessHvacEnv, normalize
from .maddpg import AgentSpec, Scheme, TrainConfig, TrainResult, train
from .timeseries import EpisodeWindow, PriceTemperatureSeries


@dataclass(frozen=True)
class HeuristicRules:
    charge_power_when_cheap: float = 5.0
    hvac_power_magnitude: float = 1.0
    temp_threshold: float = 0.0


def heuristic_policy(
    state: EnvState,
    p: float,
    p_bar: float,
    T_out: float,
    rules: HeuristicRules = HeuristicRules(),
    env: SessHvacEnv | None = None,
) -> JointAction:
    """Charge when the price is below its moving average; heat below the threshold, cool above it.

    With ``env`` given the action is projected onto the feasible set for ``state``.
    """
    n = len(state.indoor_temps)
    c = rules.charge_power_when_cheap if p < p_bar else 0.0
    power = rules.hvac_power_magnitude if T_out < rules.temp_threshold else -rules.hvac_power_magnitude
    raw = JointAction(np.full(n, power), np.full(n, power), c)
    return env.project(raw, state) if env is not None else raw


def heuristic_controller(env: SessHvacEnv, rules: HeuristicRules = HeuristicRules()):
    """Adapter for :meth:`SessHvacEnv.rollout`."""

    def policy(state: EnvState, window: EpisodeWindow) -> JointAction:
        return heuristic_policy(state, env.price(window, state.k), state.p_bar, float(window.outdoor_temps[state.k]), rules)

    return policy


USER_KINDS = ("temp", "temp", "price")


class UserOnlyScheme(Scheme):
    """Buildings acting on the grid alone; storage absent.

    ``active`` selects which buildings are agents; inactive buildings idle at
    zero power, which leaves the active ones unaffected since buildings only
    interact through the storage.
    """

    name = "user_only"

    def __init__(self, env: SessHvacEnv, active: Sequence[int] | None = None):
        self.env = replace(env, with_sess=False) if env.with_sess else env
        self.active = list(range(self.env.N)) if active is None else list(active)
        self.specs = [
            AgentSpec(f"building{i + 1}", 3, (self.env.buildings[i].P_g_min,), (self.env.buildings[i].P_g_max,))
            for i in self.active
        ]

    def observe(self, state, window):
        k = min(state.k, self.env.K - 1)
        view = replace(state, k=k)
        return [
            normalize(self.env.building_obs_raw(view, window, i, include_soc=False), USER_KINDS, self.env.scaling)
            for i in self.active
        ]

    def joint_action(self, actions):
        P_g = np.zeros(self.env.N)
        for i, a in zip(self.active, actions):
            P_g[i] = a[0]
        return JointAction(P_g, np.zeros(self.env.N), 0.0)

    def agent_rewards(self, rewards):
        return rewards[self.active]


def train_user_only(
    env: SessHvacEnv,
    series: PriceTemperatureSeries,
    case_label: str,
    cfg: TrainConfig,
    case_ranges=None,
    checkpoint_dirs: Sequence | None = None,
) -> list[TrainResult]:
    """One independent single-agent training per building."""
    results = []
    for i in range(env.N):
        ckpt = checkpoint_dirs[i] if checkpoint_dirs is not None else None
        results.append(train(UserOnlyScheme(env, [i]), series, case_label, cfg, case_ranges, ckpt))
    return results


class CentralizedScheme(Scheme):
    """One agent observing ``(T_in_1..N, T_out, p, p_bar, soc)`` and choosing the whole joint action.

    Its reward is the sum of all per-agent rewards.
    """

    name = "centralized"

    def __init__(self, env: SessHvacEnv):
        if not env.with_sess:
            raise ValueError("the centralized scheme needs the shared storage")
        self.env = env
        low, high = [], []
        for b in env.buildings:
            low += [b.P_g_min, b.P_d_min]
            high += [b.P_g_max, b.P_d_max]
        self.specs = [AgentSpec("central", env.N + 4, (*low, 0.0), (*high, env.sess.c_max))]
        self.kinds = ("temp",) * env.N + ("temp", "price", "price", "soc")

    def observe(self, state, window):
        k = min(state.k, self.env.K - 1)
        view = replace(state, k=k)
        raw = np.concatenate([view.indoor_temps, self.env.sess_obs_raw(view, window)])
        return [normalize(raw, self.kinds, self.env.scaling)]

    def joint_action(self, actions):
        return JointAction.from_vector(actions[0])

    def agent_rewards(self, rewards):
        return np.array([rewards.sum()])


def train_centralized(
    env: SessHvacEnv,
    series: PriceTemperatureSeries,
    case_label: str,
    cfg: TrainConfig,
    case_ranges=None,
    checkpoint_dir=None,
) -> TrainResult:
    return train(CentralizedScheme(env), series, case_label, cfg, case_ranges, checkpoint_dir)
