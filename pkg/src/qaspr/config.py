"""Run configuration: a flat, validated record shared by every CLI command."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from importlib import resources
from typing import Any, Mapping

from .masking import MaskConfig
from .reasoner import ReasonerConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class RunConfig:
    train_dir: str = ""
    ind_dir: str = ""
    out: str = "run"
    dataset: str = ""
    version: str = ""
    # reasoner
    L: int = 3
    K: int = 150
    d: int = 32
    masking_enabled: bool = True
    scoring_enabled: bool = True
    shared_transform: bool = False
    relu: bool = False
    separate_scorers: bool = False
    # masking
    p_e: float = 0.5
    p_tau: float = 0.5
    eps: float = 1e-12
    # training
    batch_size: int = 16
    lr: float = 5e-3
    max_epochs: int = 30
    patience: int = 5
    eval_every: int = 1
    seed: int = 0
    # evaluation
    eval_seed: int = 0
    eval_mask: str = "none"
    threads: int = 1

    def reasoner(self) -> ReasonerConfig:
        return _project(ReasonerConfig, self)

    def mask(self) -> MaskConfig:
        return MaskConfig(p_e=self.p_e, p_tau=self.p_tau, eps=self.eps, seed=self.seed)

    def train(self) -> TrainConfig:
        return _project(TrainConfig, self)

    def problems(self) -> list[str]:
        out = self.reasoner().problems() + self.mask().problems() + self.train().problems()
        if self.eval_mask not in ("sampled", "none"):
            out.append(f"eval_mask must be 'sampled' or 'none', got {self.eval_mask!r}")
        if self.threads < 1:
            out.append(f"threads must be >= 1, got {self.threads}")
        return out

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _project(cls, cfg: RunConfig):
    return cls(**{f.name: getattr(cfg, f.name) for f in fields(cls) if hasattr(cfg, f.name)})


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value: Any, problems: list[str]) -> Any:
    kind = _TYPES[name]
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
    elif kind == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
    elif kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif kind == "str":
        if isinstance(value, str):
            return value
    problems.append(f"{name}: expected {kind}, got {value!r}")
    return None


def make_config(*layers: Mapping[str, Any]) -> RunConfig:
    """Merge layers left to right (later wins); reject unknown keys and bad values."""
    merged: dict[str, Any] = {}
    problems: list[str] = []
    for layer in layers:
        for key, value in layer.items():
            if key not in _TYPES:
                problems.append(f"{key}: unknown config key")
                continue
            if value is None:
                continue
            value = _coerce(key, value, problems)
            if value is not None:
                merged[key] = value
    cfg = RunConfig(**merged)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return data


PRESETS = [f"{ds}_v{v}" for ds in ("wn18rr", "fb15k237") for v in range(1, 5)]


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {PRESETS}"])
    text = resources.files("qaspr.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)
