"""Declarative pipeline configuration.

One YAML tree drives a whole run.  Unknown keys are rejected so typos
fail fast, and scalar keys can be overridden from the environment with
``AMLGRAPH_<SECTION>_<KEY>`` (e.g. ``AMLGRAPH_COMMUNITIES_THETA=0.02``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import InvalidConfigError

ENV_PREFIX = "AMLGRAPH"


@dataclass
class DatasetConfig:
    path: str = ""
    format: str = "CANONICAL_CSV"
    fx_table: dict = field(default_factory=dict)


@dataclass
class ReductionSettings:
    method: str = "NONE"            # NONE | RM1 | RM2 | RM3
    rm1_blocked_tx_types: list = field(default_factory=list)
    rm1_max_tx_count: int = 1000
    rm1_max_counterparties: int = 500
    rm2_top_pct: float = 0.5
    rm3_reduce_by: float = 0.5
    rm3_break_threshold: float = 0.12


@dataclass
class CommunitySettings:
    alpha: float = 0.15
    theta: float = 0.01
    epsilon: Optional[float] = None   # defaults to theta / 10
    walk_mode: str = "undirected"
    leiden_resolution: float = 1.0


@dataclass
class FeatureSettings:
    n_hops: int = 2
    currency_slots: int = 8


@dataclass
class DetectSettings:
    n_trees: int = 100
    psi: int = 256
    rng_seed: int = 0
    threshold: str = "T4"


@dataclass
class EvaluateSettings:
    capping_factor: float = 100_000.0
    share_mode: str = "EQ4"
    truth_path: str = ""
    truth_format: str = "SYNTH_JSONL"


@dataclass
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    reduction: ReductionSettings = field(default_factory=ReductionSettings)
    communities: CommunitySettings = field(default_factory=CommunitySettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    detect: DetectSettings = field(default_factory=DetectSettings)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    output_dir: str = "runs/out"
    workers: int = 1
    log_level: str = "INFO"

    def validate(self) -> None:
        if self.reduction.method not in ("NONE", "RM1", "RM2", "RM3"):
            raise InvalidConfigError("reduction.method", self.reduction.method)
        if not 0 < self.communities.alpha < 1:
            raise InvalidConfigError("communities.alpha", "must be in (0,1)")
        if self.communities.theta < 0:
            raise InvalidConfigError("communities.theta", "must be >= 0")
        if self.communities.walk_mode not in ("undirected", "forward", "both"):
            raise InvalidConfigError("communities.walk_mode", self.communities.walk_mode)
        if self.detect.threshold not in ("T1", "T2", "T3", "T4") and not str(self.detect.threshold).isdigit():
            raise InvalidConfigError("detect.threshold", self.detect.threshold)
        if self.evaluate.share_mode not in ("EQ4", "MAX_SHARE"):
            raise InvalidConfigError("evaluate.share_mode", self.evaluate.share_mode)
        if self.evaluate.capping_factor <= 0:
            raise InvalidConfigError("evaluate.capping_factor", "must be positive")
        if self.workers < 1:
            raise InvalidConfigError("workers", "must be >= 1")

    @property
    def ppr_epsilon(self) -> float:
        if self.communities.epsilon is not None:
            return self.communities.epsilon
        return self.communities.theta / 10.0 if self.communities.theta > 0 else 1e-6


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise InvalidConfigError(path or "<root>", "expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise InvalidConfigError(where, "unknown key")
        if dataclasses.is_dataclass(_SECTION_TYPES.get(key)) and isinstance(value, dict) and not path:
            kwargs[key] = _build(_SECTION_TYPES[key], value, where)
        else:
            kwargs[key] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "reduction": ReductionSettings,
    "communities": CommunitySettings,
    "features": FeatureSettings,
    "detect": DetectSettings,
    "evaluate": EvaluateSettings,
}


def _apply_env(cfg: PipelineConfig) -> None:
    for section, cls in _SECTION_TYPES.items():
        obj = getattr(cfg, section)
        for f in fields(cls):
            raw = os.environ.get(f"{ENV_PREFIX}_{section.upper()}_{f.name.upper()}")
            if raw is None:
                continue
            setattr(obj, f.name, _coerce(raw, getattr(obj, f.name)))
    for name in ("output_dir", "workers", "log_level"):
        raw = os.environ.get(f"{ENV_PREFIX}_{name.upper()}")
        if raw is not None:
            setattr(cfg, name, _coerce(raw, getattr(cfg, name)))


def _coerce(raw: str, current: Any) -> Any:
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = _build(PipelineConfig, data or {}, "")
    _apply_env(cfg)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise InvalidConfigError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InvalidConfigError("config", f"bad YAML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: PipelineConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
