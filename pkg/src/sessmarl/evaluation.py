"""Metrics, cost breakdowns, an exhaustive-search oracle for tiny instances, and comparison tables."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .environment import EnvState, EpisodeTrace, JointAction, SessHvacEnv, objective_cost
from .timeseries import EpisodeWindow

MAX_ORACLE_NODES = 10_000_000


def _check(trace: EpisodeTrace) -> None:
    if trace.K == 0 or trace.N == 0:
        raise ValueError("empty trace")


def atd(trace: EpisodeTrace) -> float:
    """Average absolute indoor temperature deviation over buildings and steps."""
    _check(trace)
    return float(np.mean(np.abs(trace.T_in - trace.T_target[None, :])))


def tec(trace: EpisodeTrace) -> float:
    """Sum over steps and buildings of ``|P_g| + d`` (an energy volume, despite the name)."""
    _check(trace)
    return float(np.sum(np.abs(trace.P_g) + trace.d))


def cp(atd_value: float, tec_value: float, atd_max: float, tec_max: float) -> float:
    if atd_max <= 0 or tec_max <= 0:
        raise ValueError("CP needs positive ATD and TEC maxima")
    return 0.5 * atd_value / atd_max + 0.5 * tec_value / tec_max


@dataclass(frozen=True)
class CostBreakdown:
    buildings: tuple[float, ...]
    sess: float
    total: float
    total_charge_per_building: float

    def as_dict(self) -> dict:
        d = {f"cost_building_{i + 1}": v for i, v in enumerate(self.buildings)}
        d.update(cost_sess=self.sess, cost_total_single_count=self.total, cost_total_charge_per_building=self.total_charge_per_building)
        return d


def monetary_cost(trace: EpisodeTrace) -> CostBreakdown:
    """Money spent on grid power per building and on storage charging.

    ``total`` pays each unit of charging once. ``total_charge_per_building`` is the
    monetary part of the joint objective as literally summed, charging counted
    once per building and grid power signed.
    """
    dt = trace.dt
    buildings = tuple(float(v) for v in np.sum(trace.p[:, None] * np.abs(trace.P_g), axis=0) * dt)
    sess = float(np.sum(trace.p * trace.c) * dt)
    per_building = float(np.sum(trace.p[:, None] * (trace.c[:, None] + trace.P_g)) * dt)
    return CostBreakdown(buildings, sess, float(sum(buildings) + sess), per_building)


@dataclass
class MetricsReport:
    atd: float
    tec: float
    cost: CostBreakdown | None = None
    returns: tuple[float, ...] = ()
    cp: float | None = None

    def as_dict(self) -> dict:
        d = {"atd": self.atd, "tec": self.tec, "cp": self.cp, "returns": list(self.returns)}
        if self.cost is not None:
            d.update(self.cost.as_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        n = len([k for k in d if k.startswith("cost_building_")])
        cost = None
        if n:
            cost = CostBreakdown(
                tuple(d[f"cost_building_{i + 1}"] for i in range(n)), d["cost_sess"],
                d["cost_total_single_count"], d["cost_total_charge_per_building"],
            )
        return cls(d["atd"], d["tec"], cost, tuple(d.get("returns", ())), d.get("cp"))


def summarize(trace: EpisodeTrace) -> MetricsReport:
    return MetricsReport(atd(trace), tec(trace), monetary_cost(trace), tuple(float(v) for v in trace.rewards.sum(axis=0)))


# -- comparison tables -------------------------------------------------------

@dataclass
class ComparisonRow:
    method: str
    atd: float
    tec: float
    cp: float
    n: int
    costs: dict = field(default_factory=dict)


@dataclass
class ComparisonTable:
    case_label: str
    rows: list[ComparisonRow]

    def to_records(self) -> list[dict]:
        return [{"method": r.method, "case": self.case_label, "atd": r.atd, "tec": r.tec, "cp": r.cp, "n": r.n, **r.costs}
                for r in self.rows]

    def to_text(self) -> str:
        cost_keys = sorted({k for r in self.rows for k in r.costs}, key=_cost_order)
        width = max([len("method")] + [len(r.method) for r in self.rows])
        head = f"{'method':<{width}}  {'ATD':>8}  {'TEC':>9}  {'CP':>6}" + "".join(f"  {k:>24}" for k in cost_keys)
        lines = [f"case: {self.case_label}", head, "-" * len(head)]
        for r in self.rows:
            line = f"{r.method:<{width}}  {r.atd:8.3f}  {r.tec:9.3f}  {r.cp:6.3f}"
            line += "".join(f"  {r.costs.get(k, float('nan')):24.4f}" for k in cost_keys)
            lines.append(line)
        return "\n".join(lines)

    def to_csv(self) -> str:
        records = self.to_records()
        keys = ["method", "case", "atd", "tec", "cp", "n"]
        keys += sorted({k for rec in records for k in rec if k not in keys}, key=_cost_order)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow(rec)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"case": self.case_label, "rows": self.to_records()}, indent=2)

    def write(self, directory, stem: str = "report") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{stem}.txt").write_text(self.to_text() + "\n")
        (d / f"{stem}.csv").write_text(self.to_csv())
        (d / f"{stem}.json").write_text(self.to_json())


def _cost_order(key: str):
    order = ["cost_building_", "cost_sess", "cost_total_single_count", "cost_total_charge_per_building"]
    for i, prefix in enumerate(order):
        if key.startswith(prefix):
            return (i, key)
    return (len(order), key)


def comparison_table(metrics: Mapping[str, Sequence[MetricsReport]], case_label: str) -> ComparisonTable:
    """Per-method means; CP normalizes by the maxima over the compared methods."""
    if not metrics:
        raise ValueError("nothing to compare")
    means = {}
    for method, reports in metrics.items():
        if not reports:
            raise ValueError(f"method {method!r} has no evaluations")
        costs = {}
        if all(r.cost is not None for r in reports):
            keys = reports[0].cost.as_dict().keys()
            costs = {k: float(np.mean([r.cost.as_dict()[k] for r in reports])) for k in keys}
        means[method] = (float(np.mean([r.atd for r in reports])), float(np.mean([r.tec for r in reports])), len(reports), costs)
    atd_max = max(m[0] for m in means.values())
    tec_max = max(m[1] for m in means.values())
    rows = [ComparisonRow(method, a, t, cp(a, t, atd_max, tec_max), n, costs) for method, (a, t, n, costs) in means.items()]
    return ComparisonTable(case_label, rows)


def report(traces: Mapping[str, Sequence[EpisodeTrace]], case_label: str) -> ComparisonTable:
    return comparison_table({m: [summarize(t) for t in ts] for m, ts in traces.items()}, case_label)


# -- exhaustive oracle -------------------------------------------------------

class OracleBoundError(ValueError):
    pass


@dataclass(frozen=True)
class OracleInstance:
    """A short horizon and a grid of action levels shared by every action dimension."""

    env: SessHvacEnv
    window: EpisodeWindow
    horizon: int
    levels: tuple[float, ...] = (-1.0, 0.0, 1.0)
    init_temps: tuple[float, ...] | None = None
    init_soc: float = 0.0

    @property
    def action_dim(self) -> int:
        return 2 * self.env.N + 1

    @property
    def n_nodes(self) -> int:
        branching = len(self.levels) ** self.action_dim
        return sum(branching ** h for h in range(1, self.horizon + 1))

    def short_env(self) -> SessHvacEnv:
        return replace(self.env, K=self.horizon)

    def grid_actions(self) -> list[JointAction]:
        return [JointAction.from_vector(v) for v in itertools.product(self.levels, repeat=self.action_dim)]

    def validate(self) -> None:
        if self.horizon < 1 or len(self.window) < self.horizon:
            raise ValueError("horizon must be positive and fit in the window")
        if self.n_nodes > MAX_ORACLE_NODES:
            suggestion = max((h for h in range(1, self.horizon) if replace(self, horizon=h).n_nodes <= MAX_ORACLE_NODES), default=0)
            hint = f"try horizon <= {suggestion}" if suggestion else "use fewer grid levels"
            raise OracleBoundError(f"{self.n_nodes} search nodes exceeds the bound {MAX_ORACLE_NODES}; {hint}")


def step_cost(env: SessHvacEnv, state: EnvState, window: EpisodeWindow, action: JointAction, next_temps, lam: float) -> float:
    """Single-count, absolute-grid-power stage cost of an executed (projected) action."""
    p = env.price(window, state.k)
    return p * action.c + float(np.sum(p * np.abs(action.P_g) + lam * np.abs(next_temps - env.T_target)))


@dataclass
class OracleResult:
    cost: float
    actions: list[JointAction]
    nodes: int

    def to_dict(self) -> dict:
        return {"cost": self.cost, "nodes": self.nodes, "actions": [a.as_vector().tolist() for a in self.actions]}


def dp_oracle(instance: OracleInstance, lam: float = 0.3) -> OracleResult:
    """Depth-first search over every grid action sequence through the exact dynamics.

    No states are merged, so the result is the true optimum over the grid.
    The returned actions are the executed (projected) ones.
    """
    instance.validate()
    env = instance.short_env()
    window = instance.window
    grid = instance.grid_actions()
    nodes = 0

    def search(state: EnvState) -> tuple[float, list[JointAction]]:
        nonlocal nodes
        best_cost, best_seq = np.inf, []
        for raw in grid:
            out = env.step(state, raw, window)
            nodes += 1
            cost = step_cost(env, state, window, out.action, out.next_state.indoor_temps, lam)
            if out.next_state.k < env.K:
                tail, seq = search(out.next_state)
                cost += tail
            else:
                seq = []
            if cost < best_cost:
                best_cost, best_seq = cost, [out.action, *seq]
        return best_cost, best_seq

    start = env.reset(window, instance.init_temps, instance.init_soc)
    cost, seq = search(start)
    return OracleResult(float(cost), seq, nodes)


def brute_force_oracle(instance: OracleInstance, lam: float = 0.3) -> OracleResult:
    """Independent cross-check: roll out every full sequence and cost its trace."""
    instance.validate()
    env = instance.short_env()
    grid = instance.grid_actions()
    best_cost, best_seq, count = np.inf, None, 0
    for seq in itertools.product(grid, repeat=instance.horizon):
        trace = env.rollout(lambda s, w, seq=seq: seq[s.k], instance.window, instance.init_temps, instance.init_soc)
        cost = objective_cost(trace, lam, charge_per_building=False, absolute_grid=True)
        count += 1
        if cost < best_cost:
            best_cost, best_seq = cost, list(seq)
    return OracleResult(float(best_cost), best_seq, count)


def snap_to_grid(action: JointAction, levels: Sequence[float]) -> JointAction:
    """Replace each component by its nearest grid level."""
    lv = np.asarray(levels, dtype=float)
    v = action.as_vector()
    return JointAction.from_vector(lv[np.argmin(np.abs(v[:, None] - lv[None, :]), axis=1)])


def trace_cost(trace: EpisodeTrace, lam: float = 0.3) -> float:
    """The oracle's objective evaluated on a trace."""
    return objective_cost(trace, lam, charge_per_building=False, absolute_grid=True)


def fraction_cheap_charging(trace: EpisodeTrace) -> float:
    """Share of charged energy bought while the price was below its moving average."""
    total = float(np.sum(trace.c))
    if total <= 0:
        return float("nan")
    return float(np.sum(trace.c[trace.p < trace.p_bar])) / total
