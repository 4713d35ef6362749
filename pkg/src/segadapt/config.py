"""Experiment configuration: JSON round-trip with strict key checking,
canonical hashing, and dotted-path access for sweeps. The defaults encode
the reference desk-scale experiment, so an empty config file is runnable."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .losses import LossWeights
from .synthdata import DomainShiftParams, SceneSpec

DEFAULT_SHIFT = dict(
    hue_rotation=38.0,
    brightness_offsets=[-0.1, 0.12, -0.15, 0.1, -0.12],
    texture_noise_amplitude=0.05,
    blur_radius=0.5,
)


def _default_shift() -> DomainShiftParams:
    return DomainShiftParams(**DEFAULT_SHIFT)


@dataclass
class DatasetConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    shift: DomainShiftParams = field(default_factory=_default_shift)
    n_source: int = 100
    n_target: int = 200
    data_dir: str = ""   # empty -> <output_dir>/dataset


@dataclass
class TrainSchedule:
    iter_tr: int = 2000
    iter_joint: int = 2000
    warmup_rounds: int = 3
    warmup_epochs_per_round: int = 2
    pretrain_epochs: int = 20
    batch_translation: int = 1
    batch_joint: int = 2
    batch_pretrain: int = 2
    seg_lr: float = 2.5e-4
    seg_momentum: float = 0.9
    seg_weight_decay: float = 5e-4
    poly_power: float = 0.8
    pretrain_lr: float = 0.02
    gen_lr: float = 1e-4
    disc_lr: float = 4e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    filter_keep_fraction: float = 0.33
    filter_scope: str = "image"      # "image" | "dataset"
    hard_onehot: bool = False        # straight-through hard labels into the generator
    log_interval: int = 10
    checkpoint_interval: int = 1000
    probe_count: int = 8

    def validate(self):
        counts = [self.iter_tr, self.iter_joint, self.warmup_rounds,
                  self.warmup_epochs_per_round, self.pretrain_epochs]
        if any(c < 0 for c in counts):
            raise ValueError("iteration/epoch counts must be >= 0")
        rates = [self.seg_lr, self.gen_lr, self.disc_lr, self.pretrain_lr]
        if any(r <= 0 for r in rates):
            raise ValueError("learning rates must be > 0")
        if not 0 < self.filter_keep_fraction <= 1:
            raise ValueError("filter_keep_fraction must be in (0, 1]")
        if self.filter_scope not in ("image", "dataset"):
            raise ValueError(f"filter_scope must be image|dataset, got {self.filter_scope!r}")
        if min(self.batch_translation, self.batch_joint, self.batch_pretrain) < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass
class EvalConfig:
    subset: list = field(default_factory=list)   # empty -> all classes
    eval_interval: int = 500
    undefined_as_zero: bool = False


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    loss: LossWeights = field(default_factory=LossWeights)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    output_dir: str = "runs/default"

    def validate(self):
        self.schedule.validate()
        self.loss.validate()
        self.dataset.scene.validate()
        if self.dataset.n_source < 0 or self.dataset.n_target < 0:
            raise ValueError("dataset counts must be >= 0")
        if self.eval.eval_interval <= 0:
            raise ValueError("eval_interval must be > 0")
        return self

    @property
    def data_dir(self) -> str:
        return self.dataset.data_dir or os.path.join(self.output_dir, "dataset")


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_dict(v) for v in obj]
    return obj


def _from_dict(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown config key(s) at {path or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        target = _DATACLASS_FIELD_TYPES.get((cls, name))
        if target is not None:
            if not isinstance(value, dict):
                raise ValueError(f"config key {path}{name} must be an object")
            kwargs[name] = _from_dict(target, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


_DATACLASS_FIELD_TYPES = {
    (ExperimentConfig, "dataset"): DatasetConfig,
    (ExperimentConfig, "schedule"): TrainSchedule,
    (ExperimentConfig, "loss"): LossWeights,
    (ExperimentConfig, "eval"): EvalConfig,
    (DatasetConfig, "scene"): SceneSpec,
    (DatasetConfig, "shift"): DomainShiftParams,
}


def config_to_dict(config: ExperimentConfig) -> dict:
    return _to_dict(config)


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    cfg.loss.w_perceptual = tuple(cfg.loss.w_perceptual)
    return cfg.validate()


def load_config(path: str | None) -> ExperimentConfig:
    """Load a JSON config; missing keys fall back to the defaults and an
    absent/empty file yields the full default experiment."""
    if path is None:
        return ExperimentConfig().validate()
    with open(path) as f:
        raw = f.read().strip()
    data = json.loads(raw) if raw else {}
    return config_from_dict(data)


def canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def save_config(config: ExperimentConfig, path: str):
    with open(path, "w") as f:
        json.dump(config_to_dict(config), f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------- sweep helpers


def list_config_paths(config: ExperimentConfig | None = None) -> list[str]:
    config = config or ExperimentConfig()

    def walk(obj, prefix):
        out = []
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if dataclasses.is_dataclass(value):
                out.extend(walk(value, f"{prefix}{f.name}."))
            else:
                out.append(f"{prefix}{f.name}")
        return out

    return walk(config, "")


def get_by_path(config: ExperimentConfig, path: str):
    obj = config
    parts = path.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    return getattr(obj, parts[-1])


def set_by_path(config: ExperimentConfig, path: str, value):
    valid = list_config_paths(config)
    if path not in valid:
        raise KeyError(f"unknown config path {path!r}; valid paths: {', '.join(valid)}")
    obj = config
    parts = path.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    setattr(obj, parts[-1], value)
    return config
