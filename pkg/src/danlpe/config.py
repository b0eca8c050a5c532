"""Experiment configuration: a JSON file validated against pydantic models."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .training import PROFILES, HyperParams

Method = Literal["dnn", "dann", "dan_lpe", "bbse"]


class ConfigError(Exception):
    """Invalid configuration; carries one diagnostic line per bad field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticTask(_Strict):
    L: int = Field(2, ge=2)
    d: int = Field(10, ge=1)
    alpha: list[float] = [0.5, 0.5]
    beta: list[float] = [0.9, 0.1]
    n_source: int = Field(4000, ge=1)
    n_target: int = Field(4000, ge=1)
    separation: float = Field(3.0, gt=0)
    scale: float = Field(1.0, gt=0)
    # fixed data seed; when omitted every run seed draws its own sample
    seed: int | None = None

    @model_validator(mode="after")
    def _priors(self):
        for name in ("alpha", "beta"):
            p = getattr(self, name)
            if len(p) != self.L:
                raise ValueError(f"{name} needs {self.L} entries")
            if min(p) < 0 or abs(sum(p) - 1) > 1e-6:
                raise ValueError(f"{name} is not a probability vector")
        if self.L > self.d:
            raise ValueError("synthetic tasks need d >= L")
        return self


class TaskConfig(_Strict):
    name: str
    synthetic: SyntheticTask | None = None
    source: str | None = None
    target: str | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        if self.synthetic is None and (self.source is None or self.target is None):
            raise ValueError("give either 'synthetic' or both 'source' and 'target' paths")
        if self.synthetic is not None and (self.source or self.target):
            raise ValueError("'synthetic' and dataset paths are mutually exclusive")
        return self


class HyperParamsConfig(_Strict):
    lambda_D: float | None = Field(None, ge=0)
    lambda_L: float | None = Field(None, gt=0)
    T: int | None = Field(None, ge=1)
    T0: int | None = Field(None, ge=0)
    k: int | None = Field(None, ge=1)
    m: int | None = Field(None, ge=1)
    B: int | None = Field(None, ge=2)
    lr: float | None = Field(None, gt=0)
    dropout: float | None = Field(None, ge=0, lt=1)
    feature_dims: list[int] | None = None
    class_dims: list[int] | None = None
    domain_dims: list[int] | None = None
    eval_every: int | None = Field(None, ge=1)
    patience: int | None = Field(None, ge=1)
    min_delta: float | None = Field(None, ge=0)
    class_weighting: bool | None = None
    step2_reinit: bool | None = None


class FeaturizeConfig(_Strict):
    corpora: dict[str, str]
    vocab_size: int = Field(500, ge=1)
    per_domain_common: int = Field(837, ge=1)
    stopwords: str | None = None


class EstimateConfig(_Strict):
    checkpoint: str
    lambda_L: float = Field(0.01, gt=0)
    m: int = Field(5, ge=1)
    tol: float = Field(1e-7, gt=0)
    max_calls: int = Field(100_000, ge=1)


class ExperimentConfig(_Strict):
    name: str = "experiment"
    profile: Literal["yelp-like", "coding-like"] = "yelp-like"
    metric: Literal["accuracy", "macro_f1"] | None = None
    tasks: list[TaskConfig] = Field(min_length=1)
    methods: list[Method] = ["dnn", "dann", "dan_lpe", "bbse"]
    hyperparams: HyperParamsConfig = HyperParamsConfig()
    seeds: list[int] = Field([0], min_length=1)
    validation_fraction: float = Field(0.1, gt=0, lt=1)
    output_dir: str = "runs"
    workers: int = Field(1, ge=1)
    featurize: FeaturizeConfig | None = None
    estimate: EstimateConfig | None = None

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        if not v:
            raise ValueError("at least one method required")
        return list(dict.fromkeys(v))

    @field_validator("tasks")
    @classmethod
    def _task_names(cls, v):
        names = [t.name for t in v]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique")
        return v

    @model_validator(mode="after")
    def _hyperparams_valid(self):
        self.hyper()
        return self

    def hyper(self, seed: int = 0) -> HyperParams:
        overrides = {k: v for k, v in self.hyperparams.model_dump().items() if v is not None}
        for key in ("feature_dims", "class_dims", "domain_dims"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        base = dict(PROFILES[self.profile])
        base.update(overrides)
        return HyperParams(seed=seed, **base)

    @property
    def metric_name(self) -> str:
        if self.metric:
            return self.metric
        return "macro_f1" if self.profile == "coding-like" else "accuracy"

    def config_hash(self) -> str:
        """Hash of everything that affects a run's results.

        Output location, worker count and the seed list are left out: each
        artifact records its own seed, so runs made with ``--seed-override``
        aggregate with the rest.
        """
        payload = self.model_dump(exclude={"output_dir", "workers", "seeds"})
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _describe(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{loc}: {err['msg']}")
    return out


def load_config(path, *, out: str | None = None, seed_override: int | None = None,
                methods: list[str] | None = None) -> ExperimentConfig:
    """Read, apply command-line overrides, and validate a config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file {path} not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}: invalid JSON ({exc.msg})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    if out is not None:
        raw["output_dir"] = out
    if seed_override is not None:
        raw["seeds"] = [seed_override]
    if methods is not None:
        raw["methods"] = methods
    base = path.parent
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    return _resolve_paths(cfg, base)


def _resolve_paths(cfg: ExperimentConfig, base: Path) -> ExperimentConfig:
    def res(p):
        return p if p is None or Path(p).is_absolute() else str(base / p)

    for t in cfg.tasks:
        t.source, t.target = res(t.source), res(t.target)
    if cfg.featurize:
        cfg.featurize.corpora = {k: res(v) for k, v in cfg.featurize.corpora.items()}
        cfg.featurize.stopwords = res(cfg.featurize.stopwords)
    if cfg.estimate:
        cfg.estimate.checkpoint = res(cfg.estimate.checkpoint)
    return cfg


def require_paths(paths: list[tuple[str, str | None]]) -> None:
    missing = [f"{field}: file {p} does not exist" for field, p in paths
               if p is not None and not Path(p).exists()]
    if missing:
        raise ConfigError(missing)
