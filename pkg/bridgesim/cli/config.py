"""
Experiment config: one YAML file, validated by pydantic. Every violated field
is reported at once through ConfigError.
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bridgesim.core.constants import (
    DEFAULT_STEPS, ORACLE_BATCH, SINE_EXAMPLE, TUNER_ALPHA0, TUNER_GAMMA,
)
from bridgesim.core.errors import ConfigError


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(Section):
    name: Literal["bm-drift", "ou", "sine-drift", "user-polynomial"]
    params: Dict[str, Any] = Field(default_factory=dict)


class GuideSection(Section):
    family: Literal["constant-drift", "mean-reverting", "linear"]
    params: Dict[str, Any] = Field(default_factory=dict)
    theta: List[float] = Field(default_factory=lambda: [0.0])


class BridgeSection(Section):
    u: List[float]
    v: List[float]
    T: float = Field(gt=0)

    @model_validator(mode="after")
    def same_dimension(self):
        if len(self.u) != len(self.v) or not self.u:
            raise ValueError(f"u and v must be non-empty and of equal length, got {len(self.u)} and {len(self.v)}")
        return self


class GridSection(Section):
    N: int = Field(default=DEFAULT_STEPS, ge=2)


class SamplerSection(Section):
    proposal: Literal["guided", "delyon-hu", "delyon-hu-nodrift", "exact-linear"] = "guided"
    n_paths: int = Field(default=1000, ge=1)
    n_iters: int = Field(default=1000, ge=1)
    thin: int = Field(default=1, ge=1)


class TunerSection(Section):
    theta0: List[float] = Field(default_factory=lambda: [0.0])
    M: int = Field(default=1, ge=1)
    K: int = Field(default=1, ge=1)
    decay: Literal["inverse-linear", "harmonic"] = "inverse-linear"
    alpha0: float = Field(default=TUNER_ALPHA0, gt=0)
    gamma: float = Field(default=TUNER_GAMMA, gt=0)
    n_outer: int = Field(default=1000, ge=0)
    fd_step: Optional[float] = Field(default=None, gt=0)


class KLScanSection(Section):
    theta_min: float = -1.0
    theta_max: float = 4.0
    n_theta: int = Field(default=26, ge=1)
    theta_ref: List[float] = Field(default_factory=lambda: [SINE_EXAMPLE["theta_tuned"]])
    n_mc: int = Field(default=10000, ge=2)

    @model_validator(mode="after")
    def ordered(self):
        if self.theta_max < self.theta_min:
            raise ValueError("theta_max must be >= theta_min")
        return self


class OracleSection(Section):
    epsilon: Optional[float] = Field(default=None, gt=0)
    n_target: int = Field(default=2000, ge=1)
    max_forward: int = Field(default=10_000_000, ge=1)
    batch_size: int = Field(default=ORACLE_BATCH, ge=1)
    times: List[float] = Field(default_factory=lambda: [1 / 3, 1 / 2, 2 / 3])
    theta_tuned: float = SINE_EXAMPLE["theta_tuned"]
    n_paths: int = Field(default=10000, ge=1)


class ValidateSection(Section):
    n_paths: int = Field(default=1000, ge=1)


class ExperimentConfig(Section):
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: Optional[int] = Field(default=None, ge=1)
    model: ModelSection
    guide: Optional[GuideSection] = None
    bridge: BridgeSection
    grid: GridSection = Field(default_factory=GridSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    tuner: TunerSection = Field(default_factory=TunerSection)
    kl_scan: KLScanSection = Field(default_factory=KLScanSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    validate_: ValidateSection = Field(default_factory=ValidateSection, alias="validate")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator("guide")
    @classmethod
    def theta_nonempty(cls, guide):
        if guide is not None and not guide.theta:
            raise ValueError("guide.theta must have at least one entry")
        return guide

    def echo(self) -> Dict[str, Any]:
        """JSON-ready dump that re-validates to the same config."""
        return self.model_dump(mode="json", by_alias=True)


def _format_errors(err: ValidationError) -> List[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def parse_config(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError([f"<root>: expected a mapping, got {type(raw).__name__}"])
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError([f"<file>: cannot read {path}: {e}"]) from e
    except yaml.YAMLError as e:
        raise ConfigError([f"<file>: invalid YAML in {path}: {e}"]) from e
    return parse_config(raw)
