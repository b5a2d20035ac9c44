"""Fine-tuning of the noise predictor and the makeup-removal inference path."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import losses as L
from .checkpoint import load_checkpoint, save_checkpoint
from .diffusion import ToyNoisePredictor, ddim_invert, ddim_sample, make_cosine_schedule, make_step_grid
from .encoders import (
    IntensityAgeDouble,
    TestDoubleFace,
    TestDoubleImageText,
    TestDoublePerceptual,
)
from .types import DIFFUSION_SIDE, ImageTensor, MakeupPair, to_signed, to_unit, validate_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 5
    lr: float = 4e-3
    invert_steps: int = 40
    sample_steps: int = 6
    T_total: int = 80
    age_loss_variant: str = "ssrnet"
    weights: L.LossWeights | None = None
    age_beta: float = 1.0
    align_sample_grid: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.T_total < 2:
            raise ConfigError("T_total must be >= 2")
        for name in ("invert_steps", "sample_steps"):
            n = getattr(self, name)
            if not 1 <= n <= self.T_total:
                raise ConfigError(f"{name}={n} must lie in [1, T_total={self.T_total}]")
        if self.age_loss_variant not in L.AGE_LOSS_VARIANTS:
            raise ConfigError(f"age_loss_variant must be one of {L.AGE_LOSS_VARIANTS}")
        if not (self.lr > 0 and self.age_beta > 0):
            raise ConfigError("lr and age_beta must be positive")
        if self.weights is None:
            object.__setattr__(self, "weights", L.LossWeights.for_variant(self.age_loss_variant))

    def grids(self):
        inv = make_step_grid(self.invert_steps, self.T_total)
        if self.align_sample_grid:
            samp = make_step_grid(self.sample_steps, self.T_total, last=inv[-1])
        else:
            samp = make_step_grid(self.sample_steps, self.T_total)
        return inv, samp

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FinetuneConfig":
        d = dict(d)
        if isinstance(d.get("weights"), dict):
            d["weights"] = L.LossWeights(**d["weights"])
        return cls(**d)


@dataclass
class Backends:
    image_text: object
    face: object
    perceptual: object
    age_predictor: object | None = None
    prompts: L.PromptPair = field(default_factory=L.PromptPair)

    @classmethod
    def test_doubles(cls, age_predictor=None) -> "Backends":
        return cls(TestDoubleImageText(), TestDoubleFace(), TestDoublePerceptual(),
                   age_predictor if age_predictor is not None else IntensityAgeDouble())

    def freeze(self):
        for b in (self.image_text, self.face, self.perceptual, self.age_predictor):
            if isinstance(b, torch.nn.Module):
                b.eval()
                for p in b.parameters():
                    p.requires_grad_(False)
        return self


@dataclass
class RunManifest:
    config: dict
    dataset_fingerprints: list[str]
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint_path: str | None = None
    encoder_resize: str = "each backend resizes to its declared input side"
    run_config: dict = field(default_factory=dict)
    command: str = ""

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def from_json(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def totals(self) -> list[float]:
        return [e["total"] for e in self.epochs]


def pair_fingerprint(pair: MakeupPair) -> str:
    h = hashlib.sha256()
    for img in (pair.clean, pair.made_up):
        h.update(np.ascontiguousarray(img.values, dtype=np.float64).tobytes())
    h.update(f"{pair.age_years!r}|{pair.source_id}".encode())
    return h.hexdigest()[:16]


def _dtype(predictor) -> torch.dtype:
    try:
        return next(predictor.parameters()).dtype
    except (AttributeError, StopIteration):
        return torch.float32


def generate(made_up_unit: torch.Tensor, predictor, schedule, inv_grid, samp_grid) -> torch.Tensor:
    """Invert without gradient, then sample with gradient. Unit range in and out.

    Training and inference both call this, so they share one code path.
    """
    x_m = to_signed(made_up_unit)
    with torch.no_grad():
        latent = ddim_invert(x_m, predictor, schedule, inv_grid)
    return to_unit(ddim_sample(latent, predictor, schedule, samp_grid))


def objective(generated, original, made_up, age_years, backends: Backends, cfg: FinetuneConfig):
    """Full weighted objective for one batch. Returns (LossBreakdown, clip_skipped)."""
    w = cfg.weights
    skipped = False
    try:
        clip = L.clip_directional_loss(generated, made_up, backends.image_text, backends.prompts)
    except L.DegenerateDirectionError:
        clip, skipped = generated.new_zeros(()), True
    ident = L.identity_loss(original, made_up, generated, backends.face, w)
    lp = L.perceptual_loss(generated, made_up, backends.perceptual)
    l1 = L.pixel_l1_loss(generated, made_up)
    if cfg.age_loss_variant == "ssrnet":
        if backends.age_predictor is None:
            raise ConfigError("ssrnet age loss needs an age predictor backend")
        age = L.ssrnet_age_loss(age_years, generated, backends.age_predictor, cfg.age_beta)
    else:
        age = L.clip_age_loss(generated, age_years, backends.image_text)
    return L.total_loss(clip, ident, lp, l1, age, w), skipped


def _batch(img: ImageTensor, dtype) -> torch.Tensor:
    return img.to_batch(dtype)


def _evaluate(pairs, predictor, schedule, grids, backends, cfg, dtype) -> float:
    tot = 0.0
    with torch.no_grad():
        for p in pairs:
            g = generate(_batch(p.made_up, dtype), predictor, schedule, *grids)
            bd, _ = objective(g, _batch(p.clean, dtype), _batch(p.made_up, dtype), [p.age_years], backends, cfg)
            tot += float(bd.total)
    return tot / len(pairs)


def finetune(pairs: Sequence[MakeupPair], predictor, cfg: FinetuneConfig, backends: Backends,
             val_pairs: Sequence[MakeupPair] | None = None):
    """Fine-tune ``predictor`` in place on makeup pairs; returns (predictor, RunManifest).

    One Adam step per pair. The predictor state with the lowest validation
    total (training-epoch mean when no validation pairs are given) is
    restored at the end.
    """
    if not pairs:
        raise ValueError("no training pairs")
    for p in list(pairs) + list(val_pairs or []):
        validate_image(p.made_up, DIFFUSION_SIDE)
        validate_image(p.clean, DIFFUSION_SIDE)
    backends.freeze()
    schedule = make_cosine_schedule(cfg.T_total)
    grids = cfg.grids()
    dtype = _dtype(predictor)
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(predictor.parameters(), lr=cfg.lr)
    manifest = RunManifest(config=cfg.to_dict(), dataset_fingerprints=[pair_fingerprint(p) for p in pairs])

    best, best_state = math.inf, copy.deepcopy(predictor.state_dict())
    for epoch in range(1, cfg.epochs + 1):
        predictor.train()
        sums = dict.fromkeys(L.LossBreakdown.COMPONENTS + ("total",), 0.0)
        skipped = 0
        for i in torch.randperm(len(pairs), generator=gen).tolist():
            p = pairs[i]
            clean, made_up = _batch(p.clean, dtype), _batch(p.made_up, dtype)
            g = generate(made_up, predictor, schedule, *grids)
            bd, skip = objective(g, clean, made_up, [p.age_years], backends, cfg)
            if not torch.isfinite(bd.total):
                raise L.NonFiniteLossError(f"non-finite total loss on pair {p.source_id!r}", bd.detached())
            opt.zero_grad()
            bd.total.backward()
            opt.step()
            skipped += skip
            for k, v in bd.to_dict().items():
                sums[k] += v
        row = {k: v / len(pairs) for k, v in sums.items()}
        row.update(epoch=epoch, clip_skipped=skipped)
        if val_pairs:
            row["val_total"] = _evaluate(val_pairs, predictor, schedule, grids, backends, cfg, dtype)
        score = row.get("val_total", row["total"])
        if score < best:
            best, best_state, manifest.best_epoch = score, copy.deepcopy(predictor.state_dict()), epoch
        manifest.epochs.append(row)
        log.info("epoch %d total %.5f%s", epoch, row["total"],
                 f" val {row['val_total']:.5f}" if "val_total" in row else "")
    predictor.load_state_dict(best_state)
    predictor.eval()
    return predictor, manifest


def remove_makeup(img: ImageTensor, predictor, cfg: FinetuneConfig = FinetuneConfig()) -> ImageTensor:
    """Makeup image (unit range, 256 x 256) in, cleaned image out."""
    validate_image(img, DIFFUSION_SIDE)
    if img.range_tag != "unit":
        raise ValueError("remove_makeup expects a unit-range image")
    schedule = make_cosine_schedule(cfg.T_total)
    was_training = getattr(predictor, "training", False)
    if was_training:
        predictor.eval()
    with torch.no_grad():
        out = generate(img.to_batch(_dtype(predictor)), predictor, schedule, *cfg.grids())
    if was_training:
        predictor.train()
    return ImageTensor.from_batch(out.clamp(0.0, 1.0), "unit")


def batch_clean(dir_in, dir_out, predictor, cfg: FinetuneConfig = FinetuneConfig()) -> int:
    from .io import read_image, write_image

    dir_in, dir_out = Path(dir_in), Path(dir_out)
    dir_out.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in sorted(dir_in.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            img = validate_image(read_image(path), DIFFUSION_SIDE)
        except Exception as exc:  # unreadable or wrong size: skip, keep going
            log.warning("skipping %s: %s", path.name, exc)
            continue
        write_image(remove_makeup(img, predictor, cfg), dir_out / path.name)
        log.info("cleaned %s", path.name)
        count += 1
    return count


def save_predictor(predictor: ToyNoisePredictor, path, extra: dict | None = None):
    return save_checkpoint(path, "noise_predictor", predictor.config, predictor.state_dict(), extra)


def load_predictor(path) -> ToyNoisePredictor:
    ck = load_checkpoint(path, "noise_predictor")
    model = ToyNoisePredictor(**ck["arch"])
    model.load_state_dict(ck["state_dict"])
    return model.eval()
