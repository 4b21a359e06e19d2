"""Experiment configuration: dataclasses, presets and YAML loading."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError

EMBEDDING_METHODS = ("diffusion_map", "laplacian_eigenmap", "laplacian_eigenmap_combinatorial")
MODEL_BUILDERS = ("birth_death", "lotka_volterra", "sirs", "genetic_switch", "grid", "custom")


@dataclass
class PerturbationConfig:
    rate_noise_sigma: float = 0.0
    removal_prob: float = 0.0
    seed: int = 0


@dataclass
class SubsetConfig:
    root: list
    radius: int


@dataclass
class ModelConfig:
    builder: str
    params: dict = field(default_factory=dict)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    subset: SubsetConfig | None = None


@dataclass
class EmbeddingConfig:
    method: str = "diffusion_map"
    k: int = 2
    eps: float | None = None
    diffusion_time: float | None = None


@dataclass
class GpConfig:
    init: dict | None = None
    optimize: bool = True
    optimize_noise: bool = True
    jitter: float = 1e-8
    max_iter: int = 500


@dataclass
class IntegrationConfig:
    t_end: float
    s0: list
    rtol: float = 1e-6
    atol: float = 1e-9
    n_samples: int = 200


@dataclass
class SsaConfig:
    n_paths: int = 1000
    fast_paths: int = 200
    seed: int = 0


@dataclass
class FptConfig:
    target: str
    t_end: float | None = None
    n_paths: int | None = None
    n_samples: int = 2000


@dataclass
class ExperimentConfig:
    name: str
    model: ModelConfig
    integration: IntegrationConfig
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    gp: GpConfig = field(default_factory=GpConfig)
    ssa: SsaConfig = field(default_factory=SsaConfig)
    fpt: FptConfig | None = None
    output: str = "runs"

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {
    ExperimentConfig: {"model": ModelConfig, "integration": IntegrationConfig,
                       "embedding": EmbeddingConfig, "gp": GpConfig, "ssa": SsaConfig,
                       "fpt": FptConfig},
    ModelConfig: {"perturbation": PerturbationConfig, "subset": SubsetConfig},
}


def _build(cls, record, where):
    if not isinstance(record, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(record).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(record) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for key, value in record.items():
        sub = _NESTED.get(cls, {}).get(key)
        kwargs[key] = _build(sub, value, f"{where}.{key}") if sub and value is not None else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _positive(value, name):
    try:
        ok = float(value) > 0
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Static checks that need no model construction."""
    m = cfg.model
    if m.builder not in MODEL_BUILDERS:
        raise ConfigError(f"unknown builder {m.builder!r}; choose from {MODEL_BUILDERS}")
    p = m.perturbation
    if not float(p.rate_noise_sigma) >= 0:
        raise ConfigError("rate_noise_sigma must be >= 0")
    if not 0 <= float(p.removal_prob) < 1:
        raise ConfigError("removal_prob must lie in [0, 1)")
    if m.subset is not None and int(m.subset.radius) < 0:
        raise ConfigError("subset radius must be >= 0")
    e = cfg.embedding
    if e.method not in EMBEDDING_METHODS:
        raise ConfigError(f"unknown embedding method {e.method!r}")
    if int(e.k) != e.k or e.k < 1:
        raise ConfigError(f"embedding dimension K must be a positive integer, got {e.k}")
    if e.eps is not None:
        _positive(e.eps, "embedding.eps")
    i = cfg.integration
    for name in ("t_end", "rtol", "atol"):
        _positive(getattr(i, name), f"integration.{name}")
    if int(i.n_samples) < 2:
        raise ConfigError("integration.n_samples must be >= 2")
    if not isinstance(i.s0, (list, tuple)) or not i.s0:
        raise ConfigError("integration.s0 must be a list of species counts")
    if int(cfg.ssa.n_paths) < 1 or int(cfg.ssa.fast_paths) < 1:
        raise ConfigError("ssa path counts must be >= 1")
    if not float(cfg.gp.jitter) > 0:
        raise ConfigError("gp.jitter must be positive")
    if cfg.fpt is not None:
        if not isinstance(cfg.fpt.target, str) or not cfg.fpt.target.strip():
            raise ConfigError("fpt.target must be a predicate string")
        if cfg.fpt.t_end is not None:
            _positive(cfg.fpt.t_end, "fpt.t_end")
    return cfg


def config_from_dict(record: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, copy.deepcopy(record), "config"))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> ExperimentConfig:
    """Read a YAML file; a top-level ``preset`` key starts from that preset."""
    path = Path(path)
    try:
        record = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(record, dict):
        raise ConfigError(f"config {path} must contain a mapping")
    base = record.pop("preset", None)
    if base is not None:
        record = _merge(preset_dict(base), record)
    return config_from_dict(record)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


_LV_FPT = "F >= 0.2*N and F < 0.6*N"

PRESETS = {
    "birth_death": {
        "name": "birth_death",
        "model": {"builder": "birth_death", "params": {"N": 30}},
        "embedding": {"k": 2},
        "integration": {"t_end": 10.0, "s0": [15, 15]},
    },
    "lotka_volterra": {
        "name": "lotka_volterra",
        "model": {"builder": "lotka_volterra", "params": {"N": 30}},
        "embedding": {"k": 2},
        "integration": {"t_end": 10.0, "s0": [9, 21]},
        "fpt": {"target": _LV_FPT, "t_end": 30.0},
    },
    "lotka_volterra_perturbed": {
        "name": "lotka_volterra_perturbed",
        "model": {"builder": "lotka_volterra", "params": {"N": 30},
                  "perturbation": {"rate_noise_sigma": 0.5, "removal_prob": 0.1, "seed": 1}},
        "embedding": {"k": 2},
        "integration": {"t_end": 10.0, "s0": [9, 21]},
    },
    "lv_subset": {
        "name": "lv_subset",
        "model": {"builder": "lotka_volterra", "params": {"N": 30},
                  "subset": {"root": [5, 9], "radius": 8}},
        "embedding": {"k": 2},
        "integration": {"t_end": 5.0, "s0": [5, 9]},
    },
    "lv_fpt": {
        "name": "lv_fpt",
        "model": {"builder": "lotka_volterra", "params": {"N": 30}},
        "embedding": {"k": 2},
        "integration": {"t_end": 30.0, "s0": [9, 21], "n_samples": 2000},
        "fpt": {"target": _LV_FPT, "t_end": 30.0},
    },
    "sirs": {
        "name": "sirs",
        "model": {"builder": "sirs", "params": {"N": 30}},
        "embedding": {"k": 3},
        "integration": {"t_end": 100.0, "s0": [27, 3, 0]},
        "fpt": {"target": "R/N >= 1/10", "t_end": 100.0},
    },
    "switch_slow": {
        "name": "switch_slow",
        "model": {"builder": "genetic_switch", "params": {"switch_rate": 1e-4, "cap_A": 40}},
        "embedding": {"k": 2},
        "integration": {"t_end": 100.0, "s0": [1, 0]},
    },
    "switch_fast": {
        "name": "switch_fast",
        "model": {"builder": "genetic_switch", "params": {"switch_rate": 5e-3, "cap_A": 40}},
        "embedding": {"k": 2},
        "integration": {"t_end": 100.0, "s0": [1, 0]},
    },
}


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def preset(name: str, **overrides) -> ExperimentConfig:
    """Named experiment with the reference parameters; ``overrides`` merge on top."""
    return config_from_dict(_merge(preset_dict(name), overrides))
