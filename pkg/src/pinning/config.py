"""Experiment configuration: YAML file, validated, with unknown keys rejected."""
from __future__ import annotations

from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LawBlock(_Block):
    alpha: float = Field(0.5, ge=0)
    gamma: float = 0.0              # exponent of the log(e+n) slowly varying factor
    n_max: int = Field(65536, ge=1)


class SpecBlock(_Block):
    family: Literal["shifted_power", "iid", "truncated_power"] = "shifted_power"
    a: float = Field(2.0, gt=0)
    m: int | None = Field(None, ge=0)


class ParamsBlock(_Block):
    beta: float = Field(0.0, ge=0)
    h: float = 0.0
    h_grid: list[float] | None = None


class RunBlock(_Block):
    N: int = Field(1024, ge=1)
    burn: int | None = Field(None, ge=0)
    replicas: int = Field(16, ge=8)
    seed: int = Field(0, ge=0)
    budget: int = Field(20000, ge=1000)
    threads: int | None = Field(None, ge=1)


class CheckBlock(_Block):
    suites: list[str] = Field(default_factory=list)
    inputs: dict = Field(default_factory=dict)
    tolerances: dict[str, float] = Field(default_factory=dict)


class ExperimentConfig(_Block):
    law: LawBlock = Field(default_factory=LawBlock)
    spec: SpecBlock = Field(default_factory=SpecBlock)
    params: ParamsBlock = Field(default_factory=ParamsBlock)
    run: RunBlock = Field(default_factory=RunBlock)
    check: CheckBlock = Field(default_factory=CheckBlock)

    @model_validator(mode="after")
    def _consistent(self):
        if self.spec.family == "truncated_power" and self.spec.m is None:
            raise ValueError("truncated_power needs spec.m")
        if self.params.h_grid is not None and any(
                b <= a for a, b in zip(self.params.h_grid, self.params.h_grid[1:])):
            raise ValueError("params.h_grid must be strictly increasing")
        return self

    def resolved(self) -> dict:
        # the thread count is an execution detail and does not change results
        return self.model_dump(mode="json", exclude={"run": {"threads"}})


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ExperimentConfig.model_validate(data)


def merge(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply dotted-key overrides ("law.alpha": 0.5) and revalidate."""
    data = config.model_dump()
    for key, value in overrides.items():
        block, name = key.split(".", 1)
        data[block][name] = value
    return ExperimentConfig.model_validate(data)
