"""Validated experiment configuration"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import Config
from src.errors import ConfigError

Cutoff = Optional[int]  # None = ALL


def _coerce_cutoff(value):
    if isinstance(value, str):
        value = value.strip().lower()
        return int(value) if value.isdigit() else value
    return value


class RankerParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(Config.LEARNING_RATE, gt=0)
    colsample_bytree: float = Field(Config.COLSAMPLE_BYTREE, gt=0, le=1)
    max_depth: int = Field(Config.MAX_DEPTH, ge=0)
    n_estimators: int = Field(Config.N_ESTIMATORS, ge=0)
    reg_lambda: float = Field(Config.REG_LAMBDA, ge=0)
    gamma: float = Field(Config.GAMMA, ge=0)
    seed: int = Config.DEFAULT_SEED


class CorruptionOp(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["rotate", "translate", "flip"]
    degrees: float = 0.0
    dx: int = 0
    dy: int = 0
    axis: Literal["h", "v"] = "h"

    @classmethod
    def parse(cls, text: str) -> "CorruptionOp":
        """Parse 'rotate:90', 'translate:1,0' or 'flip:h'"""
        kind, _, arg = text.strip().partition(":")
        if kind == "rotate":
            return cls(kind="rotate", degrees=float(arg or 90))
        if kind == "translate":
            parts = [p for p in arg.split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError(f"translate needs dx,dy: {text!r}")
            return cls(kind="translate", dx=int(parts[0]), dy=int(parts[1]))
        if kind == "flip":
            return cls(kind="flip", axis=arg or "h")
        raise ValueError(f"unknown corruption op {text!r}")

    def label(self) -> str:
        if self.kind == "rotate":
            return f"rotate:{self.degrees:g}"
        if self.kind == "translate":
            return f"translate:{self.dx},{self.dy}"
        return f"flip:{self.axis}"


class CorruptionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ops: List[CorruptionOp]

    @field_validator("ops", mode="before")
    @classmethod
    def _parse_ops(cls, value):
        if isinstance(value, str):
            value = [v for v in value.split(";") if v.strip()]
        return [CorruptionOp.parse(v) if isinstance(v, str) else v for v in value]

    @field_validator("ops")
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("corruption needs at least one op")
        return value


class DatasetRef(BaseModel):
    model_config = ConfigDict(extra="forbid")

    inputs: str
    labels: str


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: str
    train: Optional[DatasetRef] = None
    validation: DatasetRef
    test: DatasetRef
    method: Literal["actgraph", "act", "gini", "mcp", "dsa"] = "actgraph"
    k: int = Field(Config.DEFAULT_K, ge=2)
    cnf_layers: int = Field(Config.DEFAULT_CNF_LAYERS, ge=1)
    aggregation: Literal["sum", "max", "mean"] = Config.DEFAULT_AGGREGATION
    ranker: RankerParams = Field(default_factory=RankerParams)
    corruption: Optional[CorruptionSpec] = None
    validation_corruption: Optional[CorruptionSpec] = None
    fault_datasets: List[DatasetRef] = Field(default_factory=list)
    balance_target: int = Field(Config.BALANCE_TARGET, ge=1)
    test_normal: int = Field(Config.TEST_NORMAL, ge=0)
    test_fault: int = Field(Config.TEST_FAULT, ge=0)
    cutoffs: List[Union[int, Literal["all"]]] = Field(
        default_factory=lambda: [100, 500, 1000, "all"]
    )
    seed: int = Config.DEFAULT_SEED
    threads: int = Field(Config.DEFAULT_THREADS, ge=1)
    chunk_size: int = Field(Config.CHUNK_SIZE, ge=1)

    @field_validator("corruption", "validation_corruption", mode="before")
    @classmethod
    def _ops_string(cls, value):
        if isinstance(value, str):
            return {"ops": value}
        return value

    @field_validator("cutoffs", mode="before")
    @classmethod
    def _split_cutoffs(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return [_coerce_cutoff(v) for v in value]

    @field_validator("cutoffs")
    @classmethod
    def _positive_cutoffs(cls, value):
        for cutoff in value:
            if cutoff != "all" and cutoff < 1:
                raise ValueError("cutoffs must be >= 1 or 'all'")
        if not value:
            raise ValueError("at least one cutoff is required")
        return value

    @model_validator(mode="after")
    def _layers_within_k(self):
        if self.cnf_layers > self.k:
            raise ValueError("cnf_layers cannot exceed k")
        if self.method == "dsa" and self.train is None:
            raise ValueError("method 'dsa' needs a train dataset")
        return self

    def cutoff_values(self) -> Tuple[Cutoff, ...]:
        return tuple(None if c == "all" else int(c) for c in self.cutoffs)

    def resolve_paths(self, base: Path) -> "ExperimentConfig":
        """Make every relative path relative to the config file directory"""

        def fix(path: str) -> str:
            p = Path(path)
            return str(p if p.is_absolute() else (base / p))

        def fix_ref(ref: Optional[DatasetRef]) -> Optional[DatasetRef]:
            if ref is None:
                return None
            return DatasetRef(inputs=fix(ref.inputs), labels=fix(ref.labels))

        return self.model_copy(
            update={
                "model": fix(self.model),
                "train": fix_ref(self.train),
                "validation": fix_ref(self.validation),
                "test": fix_ref(self.test),
                "fault_datasets": [fix_ref(r) for r in self.fault_datasets],
            }
        )

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        config = ExperimentConfig.model_validate(payload)
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid experiment config {path}: {e}") from e
    return config.resolve_paths(path.parent)
