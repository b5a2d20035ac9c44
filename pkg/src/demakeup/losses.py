"""Fine-tuning objective terms and their weighted combination.

All image arguments are unit-range N x 3 x H x W tensors. Each term returns
a scalar tensor averaged over the batch, so it can be backpropagated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import torch

from .age import smoothed_l1
from .encoders import FaceEncoder, FeatureExtractor, ImageTextEncoder, resize_to

DEGENERATE_TOL = 1e-12
LPIPS_EPS = 1e-10

AGE_LOSS_VARIANTS = ("ssrnet", "clip")


class DegenerateDirectionError(ValueError):
    """An embedding difference (or embedding) has zero norm."""


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, breakdown=None):
        super().__init__(message)
        self.breakdown = breakdown


@dataclass(frozen=True)
class LossWeights:
    clip: float = 5.0
    id: float = 1.0
    lpips: float = 5.0
    l1: float = 2.0
    age: float = 0.5
    id_original: float = 0.75
    id_madeup: float = 0.25

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {f.name} must be finite and >= 0, got {v}")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "LossWeights":
        if variant not in AGE_LOSS_VARIANTS:
            raise ValueError(f"unknown age loss variant {variant!r}")
        base = cls(age=0.5 if variant == "ssrnet" else 5.0)
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PromptPair:
    source_text: str = "face with makeup"
    target_text: str = "face without makeup"

    def __post_init__(self):
        if not self.source_text or not self.target_text:
            raise ValueError("prompts must be non-empty")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted components plus the weighted total.

    Fields hold whatever was passed in: tensors during training, floats in
    logs and manifests.
    """

    clip: object
    id: object
    lpips: object
    l1: object
    age: object
    total: object

    COMPONENTS = ("clip", "id", "lpips", "l1", "age")

    def detached(self) -> "LossBreakdown":
        return LossBreakdown(**self.to_dict())

    def to_dict(self) -> dict:
        return {f.name: _as_float(getattr(self, f.name)) for f in fields(self)}


def _as_float(v) -> float:
    return float(v.detach()) if torch.is_tensor(v) else float(v)


def _cos(a: torch.Tensor, b: torch.Tensor, what: str) -> torch.Tensor:
    na, nb = a.norm(dim=-1), b.norm(dim=-1)
    if bool((na < DEGENERATE_TOL).any()) or bool((nb < DEGENERATE_TOL).any()):
        raise DegenerateDirectionError(f"{what}: zero-norm vector, cosine undefined")
    return (a * b).sum(-1) / (na * nb)


def clip_directional_loss(generated, source, encoder: ImageTextEncoder, prompts: PromptPair = PromptPair()):
    """1 - cos(E_I(generated) - E_I(source), E_T(target) - E_T(source text))."""
    d_img = encoder.encode_image(generated) - encoder.encode_image(source)
    d_txt = (encoder.encode_text(prompts.target_text) - encoder.encode_text(prompts.source_text)).to(d_img.dtype)
    return (1.0 - _cos(d_img, d_txt.expand_as(d_img), "image/text direction")).mean()


def identity_loss(original, made_up, generated, face_encoder: FaceEncoder, weights: LossWeights = LossWeights()):
    e_g = face_encoder.encode(generated)
    d_og = 1.0 - _cos(face_encoder.encode(original), e_g, "identity")
    d_mg = 1.0 - _cos(face_encoder.encode(made_up), e_g, "identity")
    return (weights.id_original * d_og + weights.id_madeup * d_mg).mean()


def _unit_channels(f: torch.Tensor) -> torch.Tensor:
    return f / (f.pow(2).sum(dim=1, keepdim=True).sqrt() + LPIPS_EPS)


def perceptual_loss(generated, reference, extractor: FeatureExtractor):
    """LPIPS-style distance with uniform layer weights.

    Features are normalized across channels at every location; the squared
    difference is summed over channels and averaged over space and layers.
    """
    fa, fb = extractor.features(generated), extractor.features(reference)
    per_layer = [(_unit_channels(a) - _unit_channels(b)).pow(2).sum(1).mean(dim=(1, 2)) for a, b in zip(fa, fb)]
    return torch.stack(per_layer).mean(0).mean()


def pixel_l1_loss(generated, reference):
    if generated.shape != reference.shape:
        raise ValueError(f"shape mismatch {tuple(generated.shape)} vs {tuple(reference.shape)}")
    return (generated - reference).abs().mean()


def ssrnet_age_loss(ages_true, generated, age_predictor, beta: float = 1.0):
    """Mean smoothed-L1 between true ages and the proxy regressor's predictions."""
    ages = torch.as_tensor(ages_true, dtype=generated.dtype).reshape(-1)
    if ages.numel() == 0:
        raise ValueError("empty batch")
    side = getattr(age_predictor, "input_side", None)
    x = resize_to(generated, side) if side else generated
    pred = age_predictor.predict(x)
    return smoothed_l1(ages, pred, beta).mean()


def age_prompt(age_years: float) -> str:
    return f"face of {int(round(float(age_years)))}-year old"


def clip_age_loss(generated, ages_true, encoder: ImageTextEncoder):
    ages = torch.as_tensor(ages_true, dtype=torch.float64).reshape(-1)
    e_img = encoder.encode_image(generated)
    if ages.numel() == 1 and e_img.shape[0] > 1:
        ages = ages.expand(e_img.shape[0])
    e_txt = torch.stack([encoder.encode_text(age_prompt(a)) for a in ages.tolist()]).to(e_img.dtype)
    return (1.0 - _cos(e_img, e_txt, "age prompt")).mean()


def total_loss(clip, id, lpips, l1, age, weights: LossWeights = LossWeights()) -> LossBreakdown:
    comps = dict(clip=clip, id=id, lpips=lpips, l1=l1, age=age)
    bad = [k for k, v in comps.items() if not math.isfinite(_as_float(v))]
    if bad:
        raise NonFiniteLossError(f"non-finite loss components: {bad}", comps)
    total = (weights.clip * clip + weights.id * id + weights.lpips * lpips
             + weights.l1 * l1 + weights.age * age)
    return LossBreakdown(total=total, **comps)
