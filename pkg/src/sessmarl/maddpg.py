"""Multi-agent DDPG with centralized critics and decentralized actors.

A :class:`Scheme` adapts the simulator to a set of learning agents: it says
what each agent observes, how the agents' action vectors assemble into one
joint action and which reward each agent receives. The proposed method uses
one agent per building plus one storage agent; the baselines module defines
the other schemes on the same machinery.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .environment import EpisodeTrace, JointAction, SessHvacEnv, TraceRecorder
from .neuralnet import (
    DivergenceError,
    Head,
    MlpParams,
    OptimizerState,
    adam_update,
    backward,
    forward,
    init_mlp,
    load_mlp,
    predict,
    save_mlp,
    soft_update,
)
from .timeseries import EpisodeWindow, PriceTemperatureSeries, sample_window

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentSpec:
    name: str
    obs_dim: int
    act_low: tuple[float, ...]
    act_high: tuple[float, ...]

    @property
    def act_dim(self) -> int:
        return len(self.act_low)


class Scheme:
    """Maps simulator states and actions to a list of learning agents."""

    name = "scheme"
    env: SessHvacEnv
    specs: list[AgentSpec]

    def observe(self, state, window: EpisodeWindow) -> list[np.ndarray]:
        raise NotImplementedError

    def joint_action(self, actions: Sequence[np.ndarray]) -> JointAction:
        raise NotImplementedError

    def agent_rewards(self, rewards: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ProposedScheme(Scheme):
    """N building agents acting ``(P_g, P_d)`` plus one storage agent acting ``c``."""

    name = "proposed"

    def __init__(self, env: SessHvacEnv):
        if not env.with_sess:
            raise ValueError("the proposed scheme needs the shared storage")
        self.env = env
        self.specs = [
            AgentSpec(f"building{i + 1}", 4, (b.P_g_min, b.P_d_min), (b.P_g_max, b.P_d_max))
            for i, b in enumerate(env.buildings)
        ]
        self.specs.append(AgentSpec("sess", 4, (0.0,), (env.sess.c_max,)))

    def observe(self, state, window):
        return self.env.observations(state, window)

    def joint_action(self, actions):
        n = self.env.N
        return JointAction([a[0] for a in actions[:n]], [a[1] for a in actions[:n]], actions[n][0])

    def agent_rewards(self, rewards):
        return rewards


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    tau: float = 0.01
    batch_size: int = 64
    episodes: int = 500
    steps: int = 96
    buffer_capacity: int = 100_000
    noise_start: float = 0.3
    noise_end: float = 0.05
    noise_decay_fraction: float = 0.6
    update_every: int = 1
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "softplus"
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    reward_scale: float = 1.0
    actor_reg: float = 1e-3
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def noise_scale(self, episode: int) -> float:
        """Linearly annealed exploration scale (fraction of the action half-range)."""
        horizon = max(1.0, self.noise_decay_fraction * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.noise_start + (self.noise_end - self.noise_start) * frac


# -- replay buffer -----------------------------------------------------------

@dataclass
class Transition:
    full_state: np.ndarray
    joint_action: np.ndarray
    rewards: np.ndarray
    next_full_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.states)


class ReplayBuffer:
    FIELDS = ("states", "actions", "rewards", "next_states", "terminal")

    def __init__(self, capacity: int, state_dim: int, action_dim: int, n_agents: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros((capacity, n_agents))
        self.next_states = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.count = 0  # total insertions

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def push(self, t: Transition) -> None:
        shapes = (self.states.shape[1], self.actions.shape[1], self.rewards.shape[1], self.next_states.shape[1])
        got = (np.size(t.full_state), np.size(t.joint_action), np.size(t.rewards), np.size(t.next_full_state))
        if got != shapes:
            raise ValueError(f"transition dimensions {got} do not match buffer schema {shapes}")
        i = self.count % self.capacity
        self.states[i] = t.full_state
        self.actions[i] = t.joint_action
        self.rewards[i] = t.rewards
        self.next_states[i] = t.next_full_state
        self.terminal[i] = t.terminal
        self.count += 1

    def ordered_indices(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        n = len(self)
        start = self.count % self.capacity if self.count > self.capacity else 0
        return (start + np.arange(n)) % self.capacity

    def get(self, j: int) -> Transition:
        """The ``j``-th oldest stored transition."""
        i = self.ordered_indices()[j]
        return Transition(self.states[i].copy(), self.actions[i].copy(), self.rewards[i].copy(),
                          self.next_states[i].copy(), bool(self.terminal[i]))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sampling with replacement."""
        n = len(self)
        if n < batch_size or n == 0:
            raise ValueError(f"buffer holds {n} transitions, batch needs {batch_size}")
        idx = rng.integers(n, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.terminal[idx])

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        order = self.ordered_indices()
        for name in self.FIELDS:
            np.save(d / f"{name}.npy", getattr(self, name)[order])
        (d / "meta.json").write_text(json.dumps({"capacity": self.capacity, "count": self.count}))

    @classmethod
    def load(cls, directory) -> "ReplayBuffer":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        arrays = {name: np.load(d / f"{name}.npy") for name in cls.FIELDS}
        buf = cls(meta["capacity"], arrays["states"].shape[1], arrays["actions"].shape[1], arrays["rewards"].shape[1])
        n = len(arrays["states"])
        # stored oldest-first; re-insert so ring position matches count
        slots = (np.arange(n) + (meta["count"] - n)) % buf.capacity
        for name in cls.FIELDS:
            getattr(buf, name)[slots] = arrays[name]
        buf.count = meta["count"]
        return buf


# -- agents ------------------------------------------------------------------

@dataclass
class AgentBundle:
    spec: AgentSpec
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    actor_opt: OptimizerState
    critic_opt: OptimizerState
    obs_slice: slice
    act_slice: slice

    def policy(self, obs) -> np.ndarray:
        return predict(self.actor, obs)


def build_agents(
    specs: Sequence[AgentSpec],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> list[AgentBundle]:
    """Actors see their own observation; every critic sees all observations and actions."""
    state_dim = sum(s.obs_dim for s in specs)
    action_dim = sum(s.act_dim for s in specs)
    agents = []
    o = a = 0
    for s in specs:
        actor = init_mlp([s.obs_dim, *cfg.hidden, s.act_dim], rng, cfg.activation, Head.bounded(s.act_low, s.act_high))
        critic = init_mlp([state_dim + action_dim, *cfg.hidden, 1], rng, cfg.activation)
        agents.append(AgentBundle(
            s, actor, critic, actor.copy(), critic.copy(),
            OptimizerState.for_params(actor, cfg.lr_actor), OptimizerState.for_params(critic, cfg.lr_critic),
            slice(o, o + s.obs_dim), slice(a, a + s.act_dim),
        ))
        o += s.obs_dim
        a += s.act_dim
    return agents


def act(agent: AgentBundle, obs, noise_scale: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Actor output plus Gaussian noise scaled by the action half-range, clipped to the box."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (agent.spec.obs_dim,):
        raise ValueError(f"{agent.spec.name} expects a {agent.spec.obs_dim}-dim observation, got {obs.shape}")
    a = predict(agent.actor, obs)
    if noise_scale > 0:
        half = agent.actor.head.half
        a = a + noise_scale * half * rng.standard_normal(a.shape)
    return np.clip(a, agent.spec.act_low, agent.spec.act_high)


def critic_targets(batch: Batch, agents: Sequence[AgentBundle], gamma: float, i: int, reward_scale: float = 1.0) -> np.ndarray:
    """Bootstrapped regression targets for agent ``i``.

    Next actions come from every agent's target actor applied to its own slice
    of the next full state; terminal rows do not bootstrap.
    """
    r = reward_scale * batch.rewards[:, i]
    if gamma == 0.0:
        return r.copy()
    next_actions = np.concatenate([predict(ag.target_actor, batch.next_states[:, ag.obs_slice]) for ag in agents], axis=1)
    q_next = predict(agents[i].target_critic, np.concatenate([batch.next_states, next_actions], axis=1))[:, 0]
    return r + gamma * np.where(batch.terminal, 0.0, q_next)


def critic_update(agent: AgentBundle, batch: Batch, y: np.ndarray) -> float:
    """One optimizer step on the mean squared Bellman error; returns the pre-step loss."""
    q, cache = forward(agent.critic, np.concatenate([batch.states, batch.actions], axis=1))
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise DivergenceError(f"{agent.spec.name}: non-finite critic loss")
    grads, _ = backward(agent.critic, cache, (2.0 / len(y)) * err[:, None])
    agent.critic, agent.critic_opt = adam_update(agent.critic, grads, agent.critic_opt)
    return loss


def policy_gradient(agent: AgentBundle, batch: Batch, reg: float = 0.0) -> tuple[float, MlpParams]:
    """Mean critic value at ``a_i = pi_i(s_i)`` and the gradient of the actor loss.

    The loss is ``-mean Q + reg * mean(|z|^2)`` where ``z`` is the actor's
    pre-tanh output; the penalty keeps the bounded head out of saturation,
    where its gradient vanishes.
    """
    s_i = batch.states[:, agent.obs_slice]
    a_i, actor_cache = forward(agent.actor, s_i)
    actions = batch.actions.copy()
    actions[:, agent.act_slice] = a_i
    q, critic_cache = forward(agent.critic, np.concatenate([batch.states, actions], axis=1))
    n = len(batch)
    _, dx = backward(agent.critic, critic_cache, np.full((n, 1), -1.0 / n))
    da = dx[:, batch.states.shape[1]:][:, agent.act_slice]
    head_grad = (2.0 * reg / n) * actor_cache.pre[-1] if reg else None
    grads, _ = backward(agent.actor, actor_cache, da, head_grad)
    return float(np.mean(q)), grads


def actor_update(agent: AgentBundle, batch: Batch, reg: float = 0.0) -> float:
    """One ascent step on the critic value of the agent's own action; returns the pre-step mean Q.

    Other agents' actions are taken from the batch.
    """
    mean_q, grads = policy_gradient(agent, batch, reg)
    agent.actor, agent.actor_opt = adam_update(agent.actor, grads, agent.actor_opt)
    return mean_q


def update_targets(agent: AgentBundle, tau: float) -> None:
    agent.target_actor = soft_update(agent.target_actor, agent.actor, tau)
    agent.target_critic = soft_update(agent.target_critic, agent.critic, tau)


# -- training loop -----------------------------------------------------------

RNG_STREAMS = ("init", "window", "noise", "replay")


class Trainer:
    """Runs the episode loop; owns agents, replay buffer, random streams and learning curves."""

    def __init__(
        self,
        scheme: Scheme,
        series: PriceTemperatureSeries,
        case_label: str,
        cfg: TrainConfig,
        case_ranges=None,
        init_soc: float = 0.0,
    ):
        self.scheme = scheme
        self.series = series
        self.case_label = case_label
        self.cfg = cfg
        self.case_ranges = case_ranges
        self.init_soc = init_soc
        if cfg.steps != scheme.env.K:
            raise ValueError(f"config steps {cfg.steps} != environment horizon {scheme.env.K}")
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(RNG_STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, seqs)}
        self.agents = build_agents(scheme.specs, cfg, self.rngs["init"])
        self.state_dim = sum(s.obs_dim for s in scheme.specs)
        self.action_dim = sum(s.act_dim for s in scheme.specs)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.state_dim, self.action_dim, len(self.agents))
        self.curves: list[list[float]] = []
        self.losses: list[list[float]] = []
        self.episode = 0

    @property
    def agent_names(self) -> list[str]:
        return [a.spec.name for a in self.agents]

    def run_episode(self) -> np.ndarray:
        cfg, env, scheme = self.cfg, self.scheme.env, self.scheme
        window = sample_window(self.series, self.case_label, "train", self.rngs["window"], self.case_ranges, cfg.steps)
        noise = cfg.noise_scale(self.episode)
        state = env.reset(window, init_soc=self.init_soc)
        obs = scheme.observe(state, window)
        returns = np.zeros(len(self.agents))
        losses = np.zeros(len(self.agents))
        n_updates = 0
        for step in range(cfg.steps):
            actions = [act(ag, o, noise, self.rngs["noise"]) for ag, o in zip(self.agents, obs)]
            outcome = env.step(state, scheme.joint_action(actions), window)
            rewards = scheme.agent_rewards(outcome.rewards)
            next_obs = scheme.observe(outcome.next_state, window)
            self.buffer.push(Transition(
                np.concatenate(obs), np.concatenate(actions), rewards, np.concatenate(next_obs), outcome.info["terminal"],
            ))
            returns += rewards
            state, obs = outcome.next_state, next_obs
            if len(self.buffer) >= cfg.batch_size and step % cfg.update_every == 0:
                try:
                    losses += self.update()
                except DivergenceError as exc:
                    raise DivergenceError(f"episode {self.episode}, step {step}: {exc}") from exc
                n_updates += 1
        self.curves.append([float(r) for r in returns])
        self.losses.append([float(l) / max(n_updates, 1) for l in losses])
        self.episode += 1
        return returns

    def update(self) -> np.ndarray:
        losses = np.zeros(len(self.agents))
        for i, agent in enumerate(self.agents):
            batch = self.buffer.sample(self.cfg.batch_size, self.rngs["replay"])
            y = critic_targets(batch, self.agents, self.cfg.gamma, i, self.cfg.reward_scale)
            losses[i] = critic_update(agent, batch, y)
            actor_update(agent, batch, self.cfg.actor_reg)
            update_targets(agent, self.cfg.tau)
        return losses

    def run(self, episodes: int | None = None, checkpoint_dir=None, progress: Callable | None = None) -> None:
        target = self.cfg.episodes if episodes is None else self.episode + episodes
        while self.episode < target:
            t0 = time.perf_counter()
            returns = self.run_episode()
            logger.debug("episode %d returns %s (%.2fs)", self.episode, np.round(returns, 3), time.perf_counter() - t0)
            if progress is not None:
                progress(self.episode, returns)
            every = self.cfg.checkpoint_every
            if checkpoint_dir is not None and every and self.episode % every == 0:
                self.save(checkpoint_dir)
        if checkpoint_dir is not None:
            self.save(checkpoint_dir)

    @property
    def learning_curves(self) -> np.ndarray:
        return np.array(self.curves).reshape(-1, len(self.agents))

    # -- checkpoints ---------------------------------------------------------

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "scheme": self.scheme.name,
            "case": self.case_label,
            "episode": self.episode,
            "agents": [asdict(a.spec) for a in self.agents],
            "train_config": asdict(self.cfg),
        }
        cfg_dict = meta["train_config"]
        for ag in self.agents:
            ad = d / f"agent_{ag.spec.name}"
            ad.mkdir(exist_ok=True)
            for net in ("actor", "critic", "target_actor", "target_critic"):
                save_mlp(getattr(ag, net), ad / f"{net}.json", cfg_dict)
            for opt in ("actor_opt", "critic_opt"):
                (ad / f"{opt}.json").write_text(json.dumps(getattr(ag, opt).to_dict()))
        (d / "trainer.json").write_text(json.dumps(meta, indent=2))
        (d / "rng.json").write_text(json.dumps({k: r.bit_generator.state for k, r in self.rngs.items()}))
        self.buffer.save(d / "buffer")
        write_curves(d / "curves.csv", self.agent_names, self.learning_curves)
        (d / "losses.json").write_text(json.dumps(self.losses))
        return d

    @classmethod
    def load(cls, directory, scheme: Scheme, series: PriceTemperatureSeries, case_ranges=None, init_soc: float = 0.0) -> "Trainer":
        d = Path(directory)
        meta = json.loads((d / "trainer.json").read_text())
        cfg = TrainConfig(**meta["train_config"])
        tr = cls(scheme, series, meta["case"], cfg, case_ranges, init_soc)
        if [a["name"] for a in meta["agents"]] != tr.agent_names:
            raise ValueError("checkpoint agents do not match the scheme")
        for ag in tr.agents:
            ad = d / f"agent_{ag.spec.name}"
            for net in ("actor", "critic", "target_actor", "target_critic"):
                setattr(ag, net, load_mlp(ad / f"{net}.json"))
            for opt in ("actor_opt", "critic_opt"):
                setattr(ag, opt, OptimizerState.from_dict(json.loads((ad / f"{opt}.json").read_text())))
        for k, state in json.loads((d / "rng.json").read_text()).items():
            tr.rngs[k].bit_generator.state = state
        tr.buffer = ReplayBuffer.load(d / "buffer")
        tr.curves = [list(r) for r in read_curves(d / "curves.csv")[1]]
        tr.losses = json.loads((d / "losses.json").read_text())
        tr.episode = meta["episode"]
        return tr


def load_actors(directory) -> dict[str, MlpParams]:
    """Actor networks of a checkpoint keyed by agent name."""
    d = Path(directory)
    meta = json.loads((d / "trainer.json").read_text())
    return {a["name"]: load_mlp(d / f"agent_{a['name']}" / "actor.json") for a in meta["agents"]}


def write_curves(path, names: Sequence[str], curves: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", *names])
        for e, row in enumerate(curves):
            w.writerow([e + 1, *(repr(float(v)) for v in row)])


def read_curves(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    return names, np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(-1, len(names))


@dataclass
class TrainResult:
    agents: list[AgentBundle]
    curves: np.ndarray
    names: list[str]
    trainer: Trainer = field(repr=False)


def train(
    scheme: Scheme,
    series: PriceTemperatureSeries,
    case_label: str,
    cfg: TrainConfig,
    case_ranges=None,
    checkpoint_dir=None,
    init_soc: float = 0.0,
) -> TrainResult:
    tr = Trainer(scheme, series, case_label, cfg, case_ranges, init_soc)
    tr.run(checkpoint_dir=checkpoint_dir)
    return TrainResult(tr.agents, tr.learning_curves, tr.agent_names, tr)


# -- decentralized execution -------------------------------------------------

def evaluate(
    policies: Sequence[Callable[[np.ndarray], np.ndarray]],
    scheme: Scheme,
    window: EpisodeWindow,
    episodes: int = 1,
    init_temps=None,
    init_soc: float = 0.0,
    action_filter: Callable[[JointAction], JointAction] | None = None,
) -> list[EpisodeTrace]:
    """Noise-free rollouts in which policy ``j`` only ever sees observation ``j``.

    ``action_filter`` post-processes the assembled joint action (for example
    snapping onto an oracle grid) before the environment projects it.
    """
    if len(policies) != len(scheme.specs):
        raise ValueError(f"scheme has {len(scheme.specs)} agents, got {len(policies)} policies")
    env = scheme.env
    traces = []
    for _ in range(episodes):
        state = env.reset(window, init_temps, init_soc)
        rec = TraceRecorder(env, state, window.case_label)
        while state.k < env.K:
            obs = scheme.observe(state, window)
            actions = [np.asarray(pi(o), dtype=float).reshape(-1) for pi, o in zip(policies, obs)]
            joint = scheme.joint_action(actions)
            if action_filter is not None:
                joint = action_filter(joint)
            out = env.step(state, joint, window)
            rec.record(state, window, out)
            state = out.next_state
        traces.append(rec.finish())
    return traces


def actor_policies(agents: Sequence[AgentBundle]) -> list[Callable[[np.ndarray], np.ndarray]]:
    return [ag.policy for ag in agents]
