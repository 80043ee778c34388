"""Run configuration: one key-value tree whose defaults reproduce the reference setup."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import environment as envmod
from .maddpg import TrainConfig
from .timeseries import CASES, DEFAULT_CASE_RANGES, DEFAULT_COLUMNS, CaseRange, PriceTemperatureSeries, load_csv, synth_series

SCHEMA_VERSION = 1


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CaseRangeBlock(_Block):
    start: str
    end: str
    eval_start: str


class DatasetBlock(_Block):
    path: Optional[str] = None
    column_map: dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    temperature_kelvin: bool = False
    synth_seed: int = 0
    case_ranges: dict[str, CaseRangeBlock] = Field(
        default_factory=lambda: {c: CaseRangeBlock(**vars(r)) for c, r in DEFAULT_CASE_RANGES.items()}
    )

    @model_validator(mode="after")
    def _cases(self):
        missing = [c for c in CASES if c not in self.case_ranges]
        if missing:
            raise ValueError(f"case_ranges lacks {missing}")
        return self


class BuildingBlock(_Block):
    R: float = Field(gt=0)
    C: float = Field(gt=0)
    w_d: float
    w_g: float
    P_g_min: float = -5.0
    P_g_max: float = 5.0
    P_d_min: float = -5.0
    P_d_max: float = 5.0
    T_target: float = 20.0


class SessBlock(_Block):
    soc_max: float = Field(10.0, gt=0)
    c_max: float = Field(5.0, gt=0)
    d_max_per_building: float = Field(5.0, gt=0)
    delta_c: float = Field(0.9, gt=0, le=1)
    delta_d: float = Field(1.1, ge=1)


class ScalingBlock(_Block):
    temp_center: float = 20.0
    temp_scale: float = Field(10.0, gt=0)
    price_center: float = 0.05
    price_scale: float = Field(0.02, gt=0)
    soc_center: float = 5.0
    soc_scale: float = Field(5.0, gt=0)


class EnvironmentBlock(_Block):
    buildings: list[BuildingBlock] = Field(
        default_factory=lambda: [BuildingBlock(**vars(b)) for b in envmod.DEFAULT_BUILDINGS], min_length=1
    )
    sess: SessBlock = Field(default_factory=SessBlock)
    K: int = Field(96, ge=1)
    dt: float = Field(1.0, gt=0)
    init_soc: float = Field(0.0, ge=0)
    scaling: ScalingBlock = Field(default_factory=ScalingBlock)


class RewardBlock(_Block):
    alpha_temp: float = Field(10.0, ge=0)
    alpha_energy: float = Field(1.0, ge=0)
    beta: float = Field(0.05, ge=0)
    eta: float = Field(0.2, gt=0, le=1)
    lam: float = Field(0.3, ge=0)


class TrainBlock(_Block):
    gamma: float = Field(0.9, ge=0, lt=1)
    tau: float = Field(0.01, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    episodes: int = Field(500, ge=1)
    buffer_capacity: int = Field(100_000, ge=1)
    noise_start: float = Field(0.3, ge=0)
    noise_end: float = Field(0.05, ge=0)
    noise_decay_fraction: float = Field(0.6, gt=0, le=1)
    update_every: int = Field(1, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [64, 64], min_length=1)
    activation: Literal["softplus", "relu", "tanh"] = "softplus"
    lr_actor: float = Field(1e-3, gt=0)
    lr_critic: float = Field(1e-3, gt=0)
    reward_scale: float = Field(1.0, gt=0)
    actor_reg: float = Field(1e-3, ge=0)
    checkpoint_every: int = Field(50, ge=0)


class OracleBlock(_Block):
    horizon: int = Field(2, ge=1, le=6)
    levels: list[float] = Field(default_factory=lambda: [-1.0, 0.0, 1.0], min_length=1, max_length=5)


class EvaluationBlock(_Block):
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    episodes: int = Field(1, ge=1)
    oracle: OracleBlock = Field(default_factory=OracleBlock)


class RunConfig(_Block):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 0
    output_dir: str = "runs"
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    environment: EnvironmentBlock = Field(default_factory=EnvironmentBlock)
    reward: RewardBlock = Field(default_factory=RewardBlock)
    train: TrainBlock = Field(default_factory=TrainBlock)
    evaluation: EvaluationBlock = Field(default_factory=EvaluationBlock)

    # -- builders ------------------------------------------------------------

    def make_env(self, alpha_ratio: float | None = None, with_sess: bool = True) -> envmod.SessHvacEnv:
        """Simulator for this config; ``alpha_ratio`` overrides ``alpha_temp`` with ``alpha_energy`` fixed."""
        r = self.reward
        alpha_temp = r.alpha_temp if alpha_ratio is None else alpha_ratio * r.alpha_energy
        e = self.environment
        return envmod.SessHvacEnv(
            buildings=[envmod.BuildingParams(**b.model_dump()) for b in e.buildings],
            sess=envmod.SessParams(**e.sess.model_dump()),
            reward=envmod.RewardConfig(alpha_temp=alpha_temp, alpha_energy=r.alpha_energy, beta=r.beta),
            eta=r.eta,
            K=e.K,
            dt=e.dt,
            scaling=envmod.ObsScaling(**e.scaling.model_dump()),
            with_sess=with_sess,
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.train.model_dump()
        t["hidden"] = tuple(t["hidden"])
        return TrainConfig(**t, steps=self.environment.K, seed=self.seed if seed is None else seed)

    def case_ranges(self) -> dict[str, CaseRange]:
        return {c: CaseRange(**r.model_dump()) for c, r in self.dataset.case_ranges.items()}

    def load_series(self, case_label: str) -> PriceTemperatureSeries:
        """The dataset file when configured, otherwise a synthetic series covering the case range."""
        ds = self.dataset
        if ds.path:
            return load_csv(ds.path, ds.column_map, ds.temperature_kelvin)
        r = self.case_ranges()[case_label]
        lo, hi, _ = r.bounds()
        length = int((hi - lo) // envmod.np.timedelta64(1, "h")) + 1
        return synth_series(case_label, length=length, seed=ds.synth_seed, start=r.start)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def smoke(self) -> "RunConfig":
        """Tiny profile for quick end-to-end runs."""
        return self.model_copy(update={
            "environment": self.environment.model_copy(update={"K": 8}),
            "train": self.train.model_copy(update={"episodes": 2, "batch_size": 8, "hidden": [16, 16], "checkpoint_every": 0}),
        })


class ConfigError(ValueError):
    pass


def format_validation_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(format_validation_error(err)) from None


def load_config(path=None) -> RunConfig:
    """Read a YAML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def json_schema() -> dict:
    return RunConfig.model_json_schema()


def write_resolved(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")
