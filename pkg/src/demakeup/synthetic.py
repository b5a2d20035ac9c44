"""Synthetic desk-scale data: intensity-coded ages and color-overlay makeup.

Toy "faces" are smooth random color fields whose true age is an affine
function of mean intensity. Toy "makeup" blends every pixel toward a fixed
foundation color, which brightens the face and so inflates the apparent age,
much like the real attack it imitates.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .types import AGE_SIDE, DIFFUSION_SIDE, ImageTensor, MakeupPair

AGE_OFFSET = -15.0
AGE_SLOPE = 100.0
MAKEUP_COLOR = (0.95, 0.78, 0.72)
MAKEUP_ALPHA = 0.35


def intensity_to_age(mean_intensity):
    return np.clip(AGE_OFFSET + AGE_SLOPE * np.asarray(mean_intensity, dtype=np.float64), 0.0, 69.9)


def _smooth_field(rng: np.random.Generator, side: int, coarse: int = 8) -> np.ndarray:
    z = torch.from_numpy(rng.standard_normal((1, 3, coarse, coarse)))
    up = F.interpolate(z, size=(side, side), mode="bicubic", align_corners=False)[0]
    return up.permute(1, 2, 0).numpy()


def toy_face(rng: np.random.Generator, side: int = AGE_SIDE, brightness: float | None = None) -> np.ndarray:
    if brightness is None:
        brightness = rng.uniform(0.2, 0.8)
    tint = rng.uniform(-0.06, 0.06, size=3)
    img = brightness + tint + 0.08 * _smooth_field(rng, side)
    return np.clip(img, 0.0, 1.0)


def intensity_age_dataset(n: int, seed: int = 0, side: int = AGE_SIDE) -> list[tuple[ImageTensor, float]]:
    """``n`` toy faces labelled with the age their mean intensity encodes."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        img = toy_face(rng, side)
        out.append((ImageTensor(img), float(intensity_to_age(img.mean()))))
    return out


def face_with_age(age: float, seed: int = 0, side: int = AGE_SIDE) -> ImageTensor:
    """A toy face whose mean intensity encodes ``age`` exactly."""
    rng = np.random.default_rng(seed)
    target = (age - AGE_OFFSET) / AGE_SLOPE
    img = toy_face(rng, side, brightness=target)
    img = np.clip(img - img.mean() + target, 0.0, 1.0)
    return ImageTensor(img)


def apply_overlay(img: np.ndarray, color=MAKEUP_COLOR, alpha: float = MAKEUP_ALPHA) -> np.ndarray:
    return (1.0 - alpha) * img + alpha * np.asarray(color, dtype=np.float64)


def upscale(img: np.ndarray, side: int) -> np.ndarray:
    t = torch.from_numpy(img).permute(2, 0, 1)[None]
    up = F.interpolate(t, size=(side, side), mode="bilinear", align_corners=False)[0]
    return np.clip(up.permute(1, 2, 0).numpy(), 0.0, 1.0)


def overlay_pairs(n: int, seed: int = 0, base_side: int = AGE_SIDE, side: int = DIFFUSION_SIDE,
                  alpha: float = MAKEUP_ALPHA) -> list[MakeupPair]:
    """``n`` (clean, made-up) pairs at ``side`` x ``side``, upscaled from ``base_side``."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        clean = upscale(toy_face(rng, base_side), side)
        made_up = apply_overlay(clean, alpha=alpha)
        age = float(intensity_to_age(clean.mean()))
        pairs.append(MakeupPair(ImageTensor(clean), ImageTensor(made_up), age, f"toy{i:03d}", "overlay"))
    return pairs
