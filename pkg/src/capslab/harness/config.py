"""Experiment configuration: one YAML file describes a full multi-seed run."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..caps import CapsConfig
from ..errors import ConfigError
from ..filters import make_filter

OUTPUT_ENV_VAR = "CAPSLAB_OUTPUT"
DEFAULT_OUTPUT = "runs"
MODES = ("vanilla", "temporal", "spatial", "caps")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvBlock(_Block):
    kind: Literal["toy", "pendulum", "quad"]
    params: dict[str, Any] = Field(default_factory=dict)


class AlgoBlock(_Block):
    kind: Literal["td3", "ppo"]
    params: dict[str, Any] = Field(default_factory=dict)


class CapsBlock(_Block):
    lambda_t: float = Field(0.0, ge=0)
    lambda_s: float = Field(0.0, ge=0)
    sigma: float = Field(0.0, ge=0)
    perturbations_per_state: int = Field(1, ge=1)

    def build(self) -> CapsConfig:
        return CapsConfig(self.lambda_t, self.lambda_s, self.sigma, self.perturbations_per_state)


class EvalBlock(_Block):
    episodes: int = Field(10, ge=1)
    horizon: int | None = Field(None, ge=1)
    curve_episodes: int = Field(2, ge=1)
    interval: int | None = Field(None, ge=1)


class ShiftBlock(_Block):
    inertia_range: float = Field(0.2, ge=0, lt=1)
    motor_tau_range: float = Field(0.5, ge=0, lt=1)
    obs_noise: float = Field(0.1, ge=0)


class ExperimentConfig(_Block):
    name: str = "experiment"
    env: EnvBlock
    algo: AlgoBlock
    caps: CapsBlock = Field(default_factory=CapsBlock)
    steps: int = Field(ge=0)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    eval: EvalBlock = Field(default_factory=EvalBlock)
    output_dir: str | None = None
    filter: dict[str, Any] | None = None
    shift: ShiftBlock | None = None
    modes: list[Literal["vanilla", "temporal", "spatial", "caps"]] = Field(default_factory=lambda: list(MODES))
    workers: int = Field(1, ge=1)

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, seeds: list[int]) -> list[int]:
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be unique")
        return seeds

    @field_validator("filter")
    @classmethod
    def _valid_filter(cls, block):
        if block is not None:
            make_filter(block)
        return block

    def output_root(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT)

    def with_mode(self, mode: str) -> "ExperimentConfig":
        """Copy whose CAPS weights are masked for an ablation mode."""
        temporal = mode in ("temporal", "caps")
        spatial = mode in ("spatial", "caps")
        caps = self.caps.model_copy(update={
            "lambda_t": self.caps.lambda_t if temporal else 0.0,
            "lambda_s": self.caps.lambda_s if spatial else 0.0,
        })
        return self.model_copy(update={"name": f"{self.name}/{mode}", "caps": caps})

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except (ValidationError, ConfigError) as exc:
        raise ConfigError(f"invalid experiment config:\n{exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return parse_config(data)


def config_schema() -> str:
    return json.dumps(ExperimentConfig.model_json_schema(), indent=2)
