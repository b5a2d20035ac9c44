"""Run configuration: one YAML file, ``schema: 1``, unknown keys rejected.

Example::

    schema: 1
    seed: 0
    finetune: {epochs: 5, lr: 0.004, invert_steps: 40, sample_steps: 6, T_total: 80,
               age_loss_variant: ssrnet}
    weights: {clip: 5.0, id: 1.0, lpips: 5.0, l1: 2.0, age: null}   # null -> 0.5 / 5.0 by variant
    age_train: {batch_size: 50, lr: 0.001, weight_decay: 0.0001, max_epochs: 200, patience: 15}
    predictor: {width: 16, depth: 2}
    encoder: {image_text: test-double, face: test-double, perceptual: test-double}
    eval: {age_predictor: test-double, fmr: 0.0001}
    paths: {train_manifest: pairs.csv, out_dir: runs/a}
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .age import TrainConfig
from .losses import LossWeights
from .pipeline import ConfigError, FinetuneConfig
from .types import AgeGroupBins, default_age_bins

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FinetuneSection:
    epochs: int = 5
    lr: float = 4e-3
    invert_steps: int = 40
    sample_steps: int = 6
    T_total: int = 80
    age_loss_variant: str = "ssrnet"
    age_beta: float = 1.0
    align_sample_grid: bool = True


@dataclass(frozen=True)
class WeightsSection:
    clip: float = 5.0
    id: float = 1.0
    lpips: float = 5.0
    l1: float = 2.0
    age: float | None = None
    id_original: float = 0.75
    id_madeup: float = 0.25


@dataclass(frozen=True)
class PredictorSection:
    width: int = 16
    depth: int = 2
    emb_dim: int = 32
    out_scale: float = 1e-4


@dataclass(frozen=True)
class EncoderSection:
    image_text: str = "test-double"
    face: str = "test-double"
    perceptual: str = "test-double"


@dataclass(frozen=True)
class EvalSection:
    age_predictor: str = "test-double"
    fmr: float = 1e-4
    adult_age: float = 18.0
    ci_level: float = 0.95
    impostor_ratio: int = 10
    age_bins: tuple = field(default_factory=lambda: default_age_bins().edges)

    def __post_init__(self):
        object.__setattr__(self, "age_bins", tuple(tuple(int(v) for v in b) for b in self.age_bins))
        AgeGroupBins(self.age_bins)
        if not 0 < self.fmr <= 1 or not 0 < self.ci_level < 1 or self.impostor_ratio < 1:
            raise ConfigError("eval.fmr must lie in (0, 1], ci_level in (0, 1), impostor_ratio >= 1")


@dataclass(frozen=True)
class PathsSection:
    train_manifest: str | None = None
    val_manifest: str | None = None
    age_dataset: str | None = None
    age_model: str | None = None
    out_dir: str = "runs/default"


_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "seed")


@dataclass(frozen=True)
class RunConfig:
    schema: int = SCHEMA_VERSION
    seed: int = 0
    finetune: FinetuneSection = FinetuneSection()
    weights: WeightsSection = WeightsSection()
    age_train: TrainConfig = TrainConfig()
    predictor: PredictorSection = PredictorSection()
    encoder: EncoderSection = EncoderSection()
    eval: EvalSection = EvalSection()
    paths: PathsSection = PathsSection()

    def __post_init__(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema!r}; expected {SCHEMA_VERSION}")
        if self.age_train.seed != self.seed:
            object.__setattr__(self, "age_train", replace(self.age_train, seed=self.seed))
        self.finetune_config()  # validate eagerly

    def loss_weights(self) -> LossWeights:
        w = asdict(self.weights)
        if w["age"] is None:
            w.pop("age")
        return LossWeights.for_variant(self.finetune.age_loss_variant, **w)

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(weights=self.loss_weights(), seed=self.seed, **asdict(self.finetune))

    def age_bins(self) -> AgeGroupBins:
        return AgeGroupBins(self.eval.age_bins)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["age_train"] = {k: d["age_train"][k] for k in _TRAIN_KEYS}
        d["eval"]["age_bins"] = [list(b) for b in self.eval.age_bins]
        return d


_SECTIONS = {
    "finetune": FinetuneSection,
    "weights": WeightsSection,
    "predictor": PredictorSection,
    "encoder": EncoderSection,
    "eval": EvalSection,
    "paths": PathsSection,
}


def _section(cls, data, name, allowed=None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = set(allowed or (f.name for f in fields(cls)))
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "schema" not in data:
        raise ConfigError("config is missing the 'schema' field")
    top = {"schema", "seed", "age_train", *_SECTIONS}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")
    kwargs = {name: _section(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    kwargs["age_train"] = _section(TrainConfig, data.get("age_train"), "age_train", _TRAIN_KEYS)
    try:
        return RunConfig(schema=data["schema"], seed=int(data.get("seed", 0)), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(data)


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text
