"""Experiment configuration: versioned YAML/JSON documents -> dataclasses.

Top-level keys::

    schema_version: 1          # required
    experiment: recall         # recall | gradient | cascade
    master_seed: 0
    seeds: 20                  # number of trials
    scene:    {...}            # SceneConfig fields
    response: {...}            # ResponseModel fields
    recall:   {...}            # RecallConfig fields
    gradient: {...}            # GradientConfig fields
    cascade:  {...}            # CascadeConfig fields

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import FormatError, ValidationError

SCHEMA_VERSION = 1
EXPERIMENTS = ("recall", "gradient", "cascade")


class ConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    image_w: int = 800
    image_h: int = 800
    gt_count: int = 7
    min_size: float = 24.0
    max_size: float = 320.0
    max_aspect: float = 2.0
    max_overlap: float = 0.3
    max_attempts: int = 1000

    def validate(self):
        if self.image_w < 1 or self.image_h < 1:
            raise ConfigError("scene image size must be positive")
        if self.gt_count < 0:
            raise ConfigError("gt_count must be >= 0")
        if not 0 < self.min_size <= self.max_size:
            raise ConfigError("need 0 < min_size <= max_size")
        if self.max_aspect < 1.0:
            raise ConfigError("max_aspect must be >= 1")
        if not 0.0 <= self.max_overlap <= 1.0:
            raise ConfigError("max_overlap must be in [0, 1]")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


@dataclass(frozen=True)
class ResponseModel:
    """Stand-in for a trained proposal head.

    Each pyramid point predicts a square prior box of side
    ``prior_scale * stride`` perturbed by ``box_noise`` pixels, and emits
    ``duplication`` copies jittered by ``copy_jitter`` times the box size.
    A query scores ``max_iou_to_any_gt ** gamma * quality + score_noise * N(0, 1)``
    clamped to [0, 1].
    """

    gamma: float = 2.0
    quality: float = 1.0
    score_noise: float = 0.02
    box_noise: float = 2.0
    duplication: int = 1
    copy_jitter: float = 0.02
    prior_scale: float = 4.0
    feature_dim: int = 16

    def validate(self):
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.score_noise < 0 or self.box_noise < 0 or self.copy_jitter < 0:
            raise ConfigError("noise scales must be >= 0")
        if self.duplication < 1:
            raise ConfigError("duplication must be >= 1")
        if self.prior_scale <= 0:
            raise ConfigError("prior_scale must be > 0")
        if self.feature_dim < 0:
            raise ConfigError("feature_dim must be >= 0")
        if not 0.0 <= self.quality <= 1.0:
            raise ConfigError("quality must be in [0, 1]")


@dataclass(frozen=True)
class RecallConfig:
    budgets: tuple[int, ...] = (100, 200, 300)
    duplication_factors: tuple[int, ...] = (1, 4, 8)
    methods: tuple[str, ...] = ("topk", "dqr")
    nms_iou: float = 0.7
    match_iou: float = 0.5

    def validate(self):
        if not self.budgets:
            raise ConfigError("recall.budgets must not be empty")
        if any(b < 1 for b in self.budgets):
            raise ConfigError("recall budgets must be >= 1")
        if not self.duplication_factors or any(d < 1 for d in self.duplication_factors):
            raise ConfigError("duplication factors must be >= 1")
        unknown = set(self.methods) - {"topk", "dqr"}
        if unknown or not self.methods:
            raise ConfigError(f"unknown selection methods {sorted(unknown)}")
        if not 0 < self.nms_iou < 1:
            raise ConfigError("nms_iou must be in (0, 1)")


@dataclass(frozen=True)
class GradientConfig:
    p_grid: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 20))
    fd_step: float = 1e-6
    copies: int = 2
    steps: int = 200
    lr: float = 0.05
    gt_count: int = 7
    init_low: float = 0.05
    init_high: float = 0.45

    def validate(self):
        if any(not 0 < p < 1 for p in self.p_grid):
            raise ConfigError("p_grid values must lie in (0, 1)")
        if self.copies < 1 or self.steps < 0 or self.gt_count < 1:
            raise ConfigError("copies and gt_count must be >= 1, steps >= 0")
        if self.lr <= 0 or self.fd_step <= 0:
            raise ConfigError("lr and fd_step must be > 0")
        if not 0 < self.init_low <= self.init_high < 1:
            raise ConfigError("need 0 < init_low <= init_high < 1")


@dataclass(frozen=True)
class CascadeConfig:
    schedules: tuple[tuple[int, ...], ...] = ((300, 200),)
    nms_iou: float = 0.7
    refine_shrink: float = 0.5
    duplication: int = 4

    def validate(self):
        from .duplicate_removal import DqrConfig

        if not self.schedules:
            raise ConfigError("cascade.schedules must not be empty")
        for sched in self.schedules:
            try:
                DqrConfig(self.nms_iou, tuple(sched))
            except ValidationError as exc:
                raise ConfigError(f"bad cascade schedule {list(sched)}: {exc}") from exc
        if not 0.0 <= self.refine_shrink <= 1.0:
            raise ConfigError("refine_shrink must be in [0, 1]")
        if self.duplication < 1:
            raise ConfigError("cascade.duplication must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "recall"
    master_seed: int = 0
    seeds: int = 20
    scene: SceneConfig = field(default_factory=SceneConfig)
    response: ResponseModel = field(default_factory=ResponseModel)
    recall: RecallConfig = field(default_factory=RecallConfig)
    gradient: GradientConfig = field(default_factory=GradientConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(migration_hint(self.schema_version))
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.seeds < 1:
            raise ConfigError("need at least one seed")
        for part in (self.scene, self.response, self.recall, self.gradient, self.cascade):
            part.validate()
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def migration_hint(version) -> str:
    return (
        f"config schema_version {version!r} is not supported (expected {SCHEMA_VERSION}); "
        f"add 'schema_version: {SCHEMA_VERSION}' and compare keys against "
        f"`ddq experiment --print-default-config`"
    )


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "scene": SceneConfig,
    "response": ResponseModel,
    "recall": RecallConfig,
    "gradient": GradientConfig,
    "cascade": CascadeConfig,
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls, raw, where):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    kwargs = {}
    for key, val in raw.items():
        default = names[key].default
        val = _tuplify(val)
        if isinstance(default, float) and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        kwargs[key] = val
    return cls(**kwargs)


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    if "schema_version" not in doc:
        raise ConfigError(migration_hint(None))
    top = {k: v for k, v in doc.items() if k not in _SECTIONS}
    allowed = {"schema_version", "experiment", "master_seed", "seeds"}
    unknown = sorted(set(top) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(migration_hint(top["schema_version"]))
    sections = {name: _build(cls, doc.get(name), name) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(**top, **sections).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config: {exc.strerror}", source=str(path)) from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, source=str(path), line=exc.lineno) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise FormatError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source=str(path), line=line) from exc
    return config_from_dict(doc)


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def default_config_yaml(experiment: str = "recall") -> str:
    cfg = ExperimentConfig(experiment=experiment).to_dict()
    return yaml.safe_dump(cfg, sort_keys=False)
