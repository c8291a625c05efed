"""Pipeline configuration: a single JSON document, overridable by flags.

The config hash (sha256 of the canonical JSON form) is embedded in every
output manifest so each artifact is traceable to the exact run settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .expert import ExpertTrainConfig
from .fusion import AdapterTrainConfig
from .synthgen import SynthConfig

ENV_CONFIG = "ILRKIT_CONFIG"


@dataclass
class PipelineConfig:
    seed: int = 7
    k: int = 5
    tau: float = 0.5
    taus: tuple[float, ...] = (0.2, 0.5, 0.8)
    n_tasks: int = 500  # benchmark tasks per category
    n_train_tasks: int = 2000  # adapter-training tasks, built on the train split
    n_sweep_tasks: int = 200
    test_fraction: float = 0.3
    positive_rate: float = 0.5
    format: str = "jsonl"  # embedding interchange format
    synth: SynthConfig = field(default_factory=SynthConfig)
    expert: ExpertTrainConfig = field(default_factory=ExpertTrainConfig)
    adapter: AdapterTrainConfig = field(default_factory=AdapterTrainConfig)

    def validate(self) -> None:
        problems = []
        if self.k < 2:
            problems.append("k must be >= 2 (use build-detection for K=1)")
        if not 0.0 <= self.tau < 1.0:
            problems.append("tau must lie in [0, 1) for cosine similarity")
        if len(self.taus) < 2:
            problems.append("taus must list at least 2 thresholds")
        if any(not 0.0 <= t < 1.0 for t in self.taus):
            problems.append("every sweep tau must lie in [0, 1)")
        if self.n_tasks < 1 or self.n_train_tasks < 1 or self.n_sweep_tasks < 1:
            problems.append("task counts must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            problems.append("test_fraction must lie strictly between 0 and 1")
        if not 0.0 <= self.positive_rate <= 1.0:
            problems.append("positive_rate must lie in [0, 1]")
        if self.format not in ("jsonl", "bin"):
            problems.append("format must be jsonl or bin")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        obj = dataclasses.asdict(self)
        obj["taus"] = list(self.taus)
        obj["synth"] = dataclasses.asdict(self.synth)
        obj["expert"] = dataclasses.asdict(self.expert)
        obj["expert"]["loss_weights"] = list(self.expert.loss_weights)
        obj["adapter"] = dataclasses.asdict(self.adapter)
        return obj

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _build_nested(cls, obj: dict, label: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown {label} fields: {sorted(unknown)}")
    if "loss_weights" in obj:
        obj = {**obj, "loss_weights": tuple(obj["loss_weights"])}
    return cls(**obj)


def config_from_dict(obj: dict) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    kwargs = dict(obj)
    if "taus" in kwargs:
        kwargs["taus"] = tuple(kwargs["taus"])
    if "synth" in kwargs:
        kwargs["synth"] = _build_nested(SynthConfig, kwargs["synth"], "synth")
    if "expert" in kwargs:
        kwargs["expert"] = _build_nested(ExpertTrainConfig, kwargs["expert"], "expert")
    if "adapter" in kwargs:
        kwargs["adapter"] = _build_nested(AdapterTrainConfig, kwargs["adapter"], "adapter")
    try:
        config = PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        config = PipelineConfig()
        config.validate()
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(obj)
