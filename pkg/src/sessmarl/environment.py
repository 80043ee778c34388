"""Coupled building-HVAC / shared-storage simulator.

Each building follows a first-order RC thermal model discretized with forward
Euler; the shared storage integrates charge minus the discharges requested by
the buildings. Buildings are ordered 1..N and the storage agent comes last in
every per-agent vector (rewards, observations, actions).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .timeseries import EpisodeWindow, PriceAverageState, update_price_average

logger = logging.getLogger(__name__)

PRICE_UNIT = 1000.0  # currency/MWh -> currency/kWh
SOC_TOLERANCE = 1e-9


class ContractViolation(RuntimeError):
    """An operation received inputs its precondition rules out."""


@dataclass(frozen=True)
class BuildingParams:
    R: float
    C: float
    w_d: float
    w_g: float
    P_g_min: float = -5.0
    P_g_max: float = 5.0
    P_d_min: float = -5.0
    P_d_max: float = 5.0
    T_target: float = 20.0

    def __post_init__(self):
        if not (self.R > 0 and self.C > 0):
            raise ValueError("R and C must be positive")
        if not (self.P_g_min < self.P_g_max and self.P_d_min < self.P_d_max):
            raise ValueError("power bounds must satisfy min < max")
        if not (math.isfinite(self.w_d) and math.isfinite(self.w_g)):
            raise ValueError("heat-input weights must be finite")


DEFAULT_BUILDINGS = (
    BuildingParams(R=8.0, C=15.0, w_d=0.9, w_g=1.1),
    BuildingParams(R=6.0, C=14.0, w_d=1.0, w_g=1.0),
)


@dataclass(frozen=True)
class ThermalDeltas:
    d1: float
    d2: float
    d3: float
    d4: float


@dataclass(frozen=True)
class SessParams:
    soc_max: float = 10.0
    c_max: float = 5.0
    d_max_per_building: float = 5.0
    delta_c: float = 0.9
    delta_d: float = 1.1

    def __post_init__(self):
        if not (self.soc_max > 0 and self.c_max > 0 and self.d_max_per_building > 0):
            raise ValueError("storage capacity and power limits must be positive")
        if not 0.0 < self.delta_c <= 1.0:
            raise ValueError("delta_c must lie in (0, 1]")
        if not self.delta_d >= 1.0:
            raise ValueError("delta_d must be >= 1")


@dataclass(frozen=True)
class RewardConfig:
    alpha_temp: float = 10.0
    alpha_energy: float = 1.0
    beta: float = 0.05

    def __post_init__(self):
        if min(self.alpha_temp, self.alpha_energy, self.beta) < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass(frozen=True)
class ObsScaling:
    """Affine normalization ``(x - center) / scale`` applied to observation components."""

    temp_center: float = 20.0
    temp_scale: float = 10.0
    price_center: float = 0.05
    price_scale: float = 0.02
    soc_center: float = 5.0
    soc_scale: float = 5.0


@dataclass(frozen=True)
class EnvState:
    indoor_temps: np.ndarray
    soc: float
    k: int
    p_bar: float

    def __post_init__(self):
        temps = np.array(self.indoor_temps, dtype=float)
        temps.setflags(write=False)
        object.__setattr__(self, "indoor_temps", temps)


@dataclass(frozen=True)
class JointAction:
    """Signed grid and storage-sourced HVAC power per building plus storage charging power."""

    P_g: np.ndarray
    P_d: np.ndarray
    c: float

    def __post_init__(self):
        object.__setattr__(self, "P_g", np.array(self.P_g, dtype=float).reshape(-1))
        object.__setattr__(self, "P_d", np.array(self.P_d, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))
        if self.P_g.shape != self.P_d.shape:
            raise ValueError("P_g and P_d must have one entry per building")

    @classmethod
    def from_vector(cls, v) -> "JointAction":
        """Inverse of :meth:`as_vector`: ``[P_g1, P_d1, ..., P_gN, P_dN, c]``."""
        v = np.asarray(v, dtype=float)
        return cls(v[0:-1:2], v[1:-1:2], v[-1])

    def as_vector(self) -> np.ndarray:
        out = np.empty(2 * len(self.P_g) + 1)
        out[0:-1:2] = self.P_g
        out[1:-1:2] = self.P_d
        out[-1] = self.c
        return out

    @classmethod
    def zeros(cls, n: int) -> "JointAction":
        return cls(np.zeros(n), np.zeros(n), 0.0)


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    rewards: np.ndarray
    info: dict
    action: JointAction


def discretize(params: BuildingParams, dt: float = 1.0) -> ThermalDeltas:
    """Forward-Euler coefficients for the RC model with step ``dt`` hours."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ratio = dt / (params.R * params.C)
    if ratio >= 1.0:
        raise ValueError(f"unstable discretization: dt/(R*C) = {ratio:.4g} >= 1")
    return ThermalDeltas(d1=1.0 - ratio, d2=dt * params.w_d / params.C, d3=dt * params.w_g / params.C, d4=ratio)


def building_step(T_in, T_out, P_d, P_g, deltas: ThermalDeltas):
    return deltas.d1 * T_in + deltas.d2 * P_d + deltas.d3 * P_g + deltas.d4 * T_out


def project_actions(
    raw: JointAction,
    soc: float,
    sess: SessParams,
    buildings: Sequence[BuildingParams],
) -> JointAction:
    """Map an arbitrary joint action onto the feasible set.

    Stage 1 clamps every component to its box and shrinks storage draws to the
    per-building discharge cap; stage 2 rations an over-draw on the storage
    proportionally; stage 3 trims charging so the storage cannot overfill.
    """
    g_lo = np.array([b.P_g_min for b in buildings])
    g_hi = np.array([b.P_g_max for b in buildings])
    d_lo = np.array([b.P_d_min for b in buildings])
    d_hi = np.array([b.P_d_max for b in buildings])

    P_g = np.clip(raw.P_g, g_lo, g_hi)
    P_d = np.clip(raw.P_d, d_lo, d_hi)
    c = min(max(raw.c, 0.0), sess.c_max)
    P_d_cap = sess.d_max_per_building * sess.delta_d
    P_d = np.clip(P_d, -P_d_cap, P_d_cap)

    total_d = float(np.sum(np.abs(P_d))) / sess.delta_d
    available = soc + sess.delta_c * c
    if total_d > available:
        P_d = P_d * (available / total_d)
        total_d = float(np.sum(np.abs(P_d))) / sess.delta_d

    if available - total_d > sess.soc_max:
        c = (sess.soc_max - soc + total_d) / sess.delta_c
    return JointAction(P_g, P_d, c)


def sess_step(soc: float, c: float, P_d, sess: SessParams) -> tuple[float, np.ndarray]:
    """Advance the storage one step; returns the new SOC and realized discharges."""
    d = np.abs(np.asarray(P_d, dtype=float)) / sess.delta_d
    if c < 0 or c > sess.c_max + 1e-12 or np.any(d > sess.d_max_per_building + 1e-12):
        raise ContractViolation("storage action outside its box; project actions first")
    new_soc = soc + sess.delta_c * c - float(np.sum(d))
    if -SOC_TOLERANCE <= new_soc < 0.0:
        new_soc = 0.0
    elif sess.soc_max < new_soc <= sess.soc_max + SOC_TOLERANCE:
        new_soc = sess.soc_max
    if not 0.0 <= new_soc <= sess.soc_max:
        raise ContractViolation(f"SOC {new_soc!r} leaves [0, {sess.soc_max}]; project actions first")
    return new_soc, d


def building_reward(T_in_next: float, T_target: float, p: float, P_g: float, cfg: RewardConfig) -> float:
    return -(cfg.alpha_temp * abs(T_in_next - T_target) + cfg.alpha_energy * p * abs(P_g))


def sess_reward(
    p_bar: float,
    p: float,
    c: float,
    is_terminal: bool,
    soc_terminal: float,
    cfg: RewardConfig,
) -> float:
    r = (p_bar - p) * c
    if is_terminal:
        r -= cfg.beta * soc_terminal
    return r


@dataclass(frozen=True)
class EpisodeTrace:
    """Per-step record of one rollout.

    Temperatures and SOC are the values *after* the step's action, so row ``k``
    holds everything caused by action ``k``. ``p`` is in currency/kWh.
    """

    p: np.ndarray
    p_bar: np.ndarray
    T_out: np.ndarray
    T_in: np.ndarray
    P_g: np.ndarray
    P_d: np.ndarray
    d: np.ndarray
    c: np.ndarray
    soc: np.ndarray
    rewards: np.ndarray
    T_target: np.ndarray
    soc0: float = 0.0
    T_in0: np.ndarray | None = None
    dt: float = 1.0
    case_label: str = ""

    @property
    def K(self) -> int:
        return len(self.p)

    @property
    def N(self) -> int:
        return self.T_in.shape[1]

    def to_csv(self, path) -> None:
        n = self.N
        header = ["k", "p", "p_bar", "T_out"]
        for i in range(n):
            header += [f"T_in_{i + 1}", f"P_g_{i + 1}", f"P_d_{i + 1}", f"d_{i + 1}", f"reward_{i + 1}"]
        header += ["c", "soc", "sess_reward"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.K):
                row = [k, self.p[k], self.p_bar[k], self.T_out[k]]
                for i in range(n):
                    row += [self.T_in[k, i], self.P_g[k, i], self.P_d[k, i], self.d[k, i], self.rewards[k, i]]
                row += [self.c[k], self.soc[k], self.rewards[k, n]]
                w.writerow([r if isinstance(r, int) else repr(float(r)) for r in row])

    @classmethod
    def from_csv(cls, path, T_target: Sequence[float], soc0: float = 0.0) -> "EpisodeTrace":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        n = len(T_target)

        def col(name):
            return np.array([float(r[name]) for r in rows])

        def cols(prefix):
            return np.column_stack([col(f"{prefix}_{i + 1}") for i in range(n)])

        rewards = np.column_stack([cols("reward"), col("sess_reward")])
        return cls(
            p=col("p"), p_bar=col("p_bar"), T_out=col("T_out"), T_in=cols("T_in"), P_g=cols("P_g"),
            P_d=cols("P_d"), d=cols("d"), c=col("c"), soc=col("soc"), rewards=rewards,
            T_target=np.asarray(T_target, dtype=float), soc0=soc0,
        )


class TraceRecorder:
    def __init__(self, env: "SessHvacEnv", state: EnvState, case_label: str = ""):
        self.env = env
        self.soc0 = state.soc
        self.T_in0 = state.indoor_temps.copy()
        self.case_label = case_label
        self.rows = []

    def record(self, state: EnvState, window: EpisodeWindow, outcome: StepOutcome) -> None:
        a = outcome.action
        self.rows.append((
            self.env.price(window, state.k), state.p_bar, window.outdoor_temps[state.k],
            outcome.next_state.indoor_temps, a.P_g, a.P_d, outcome.info["d"], a.c,
            outcome.next_state.soc, outcome.rewards,
        ))

    def finish(self) -> EpisodeTrace:
        cols = list(zip(*self.rows))
        return EpisodeTrace(
            p=np.array(cols[0]), p_bar=np.array(cols[1]), T_out=np.array(cols[2]),
            T_in=np.array(cols[3]), P_g=np.array(cols[4]), P_d=np.array(cols[5]), d=np.array(cols[6]),
            c=np.array(cols[7]), soc=np.array(cols[8]), rewards=np.array(cols[9]),
            T_target=np.array([b.T_target for b in self.env.buildings]),
            soc0=self.soc0, T_in0=self.T_in0, dt=self.env.dt, case_label=self.case_label,
        )


@dataclass
class SessHvacEnv:
    """Stateless simulator: ``reset`` and ``step`` return new immutable states.

    With ``with_sess=False`` the storage is absent: storage-sourced power and
    charging are forced to zero and the storage reward is always zero.
    """

    buildings: Sequence[BuildingParams] = DEFAULT_BUILDINGS
    sess: SessParams = field(default_factory=SessParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    eta: float = 0.2
    K: int = 96
    dt: float = 1.0
    scaling: ObsScaling = field(default_factory=ObsScaling)
    with_sess: bool = True

    def __post_init__(self):
        self.buildings = tuple(self.buildings)
        self.deltas = tuple(discretize(b, self.dt) for b in self.buildings)
        # per-building coefficient vectors so one building_step call advances all buildings
        self._stacked = ThermalDeltas(*(np.array(v) for v in zip(*((d.d1, d.d2, d.d3, d.d4) for d in self.deltas))))
        self.T_target = np.array([b.T_target for b in self.buildings])
        logger.debug("observation scaling: %s", self.scaling)

    @property
    def N(self) -> int:
        return len(self.buildings)

    def price(self, window: EpisodeWindow, k: int) -> float:
        return float(window.prices[k]) / PRICE_UNIT

    def reset(self, window: EpisodeWindow, init_temps=None, init_soc: float = 0.0) -> EnvState:
        if len(window) < self.K:
            raise ValueError(f"window has {len(window)} steps, episode needs {self.K}")
        temps = self.T_target.copy() if init_temps is None else np.asarray(init_temps, dtype=float)
        if temps.shape != (self.N,) or not np.all(np.isfinite(temps)):
            raise ValueError("need one finite initial temperature per building")
        if not 0.0 <= init_soc <= self.sess.soc_max:
            raise ValueError(f"init_soc {init_soc} outside [0, {self.sess.soc_max}]")
        if not self.with_sess:
            init_soc = 0.0
        return EnvState(temps, float(init_soc), 0, self.price(window, 0))

    def project(self, raw: JointAction, state: EnvState) -> JointAction:
        if not self.with_sess:
            raw = JointAction(raw.P_g, np.zeros(self.N), 0.0)
        return project_actions(raw, state.soc, self.sess, self.buildings)

    def step(self, state: EnvState, raw_action: JointAction, window: EpisodeWindow) -> StepOutcome:
        if state.k >= self.K:
            raise ContractViolation(f"step called at k={state.k}, past the episode end K={self.K}")
        a = self.project(raw_action, state)
        k = state.k
        p = self.price(window, k)
        T_out = float(window.outdoor_temps[k])

        temps = building_step(state.indoor_temps, T_out, a.P_d, a.P_g, self._stacked)
        soc, d = sess_step(state.soc, a.c, a.P_d, self.sess)
        terminal = k + 1 == self.K
        p_bar = state.p_bar
        if not terminal:
            p_bar = update_price_average(PriceAverageState(p_bar, self.eta), self.price(window, k + 1)).p_bar

        rewards = np.empty(self.N + 1)
        for i, b in enumerate(self.buildings):
            rewards[i] = building_reward(temps[i], b.T_target, p, a.P_g[i], self.reward)
        rewards[-1] = sess_reward(state.p_bar, p, a.c, terminal, soc, self.reward) if self.with_sess else 0.0

        info = {
            "d": d,
            "grid_cost": p * np.abs(a.P_g) * self.dt,
            "sess_cost": p * a.c * self.dt,
            "temp_dev": np.abs(temps - self.T_target),
            "terminal": terminal,
        }
        return StepOutcome(EnvState(temps, soc, k + 1, p_bar), rewards, info, a)

    def building_obs_raw(self, state: EnvState, window: EpisodeWindow, i: int, include_soc: bool = True) -> np.ndarray:
        T_out = float(window.outdoor_temps[state.k])
        vals = [state.indoor_temps[i], T_out, self.price(window, state.k)]
        if include_soc:
            vals.append(state.soc)
        return np.array(vals)

    def sess_obs_raw(self, state: EnvState, window: EpisodeWindow) -> np.ndarray:
        return np.array([float(window.outdoor_temps[state.k]), self.price(window, state.k), state.p_bar, state.soc])

    def observations(self, state: EnvState, window: EpisodeWindow) -> list[np.ndarray]:
        """Normalized observations: buildings ``(T_in, T_out, p, soc)``, storage ``(T_out, p, p_bar, soc)``."""
        k = min(state.k, self.K - 1)
        view = replace(state, k=k)
        obs = [normalize(self.building_obs_raw(view, window, i), BUILDING_KINDS, self.scaling) for i in range(self.N)]
        obs.append(normalize(self.sess_obs_raw(view, window), SESS_KINDS, self.scaling))
        return obs

    def rollout(self, policy, window: EpisodeWindow, init_temps=None, init_soc: float = 0.0) -> EpisodeTrace:
        """Run one episode where ``policy(state, window) -> JointAction``."""
        state = self.reset(window, init_temps, init_soc)
        rec = TraceRecorder(self, state, window.case_label)
        while state.k < self.K:
            out = self.step(state, policy(state, window), window)
            rec.record(state, window, out)
            state = out.next_state
        return rec.finish()


BUILDING_KINDS = ("temp", "temp", "price", "soc")
SESS_KINDS = ("temp", "price", "price", "soc")


def _affine(kinds: Sequence[str], scaling: ObsScaling) -> tuple[np.ndarray, np.ndarray]:
    center = np.array([getattr(scaling, f"{k}_center") for k in kinds])
    scale = np.array([getattr(scaling, f"{k}_scale") for k in kinds])
    return center, scale


def normalize(x, kinds: Sequence[str], scaling: ObsScaling) -> np.ndarray:
    center, scale = _affine(kinds, scaling)
    return (np.asarray(x, dtype=float) - center) / scale


def denormalize(z, kinds: Sequence[str], scaling: ObsScaling) -> np.ndarray:
    center, scale = _affine(kinds, scaling)
    return np.asarray(z, dtype=float) * scale + center


def objective_cost(
    trace: EpisodeTrace,
    lam: float = 0.3,
    charge_per_building: bool = True,
    absolute_grid: bool = False,
) -> float:
    """Joint monetary + comfort objective over a trace.

    The defaults evaluate the formula literally: charging cost is counted once
    per building and grid power enters signed. ``charge_per_building=False``
    counts each unit of charging once; ``absolute_grid=True`` prices cooling
    power like heating power.
    """
    if trace.K == 0:
        raise ValueError("incomplete trace: no steps recorded")
    P_g = np.abs(trace.P_g) if absolute_grid else trace.P_g
    temp = lam * np.abs(trace.T_in - trace.T_target[None, :])
    total = 0.0
    for k in range(trace.K):
        charge = trace.p[k] * trace.c[k]
        step = float(np.sum(trace.p[k] * P_g[k] + temp[k]))
        step += charge * (trace.N if charge_per_building else 1)
        total += step
    return total
