"""Pluggable embedding backends and deterministic smooth test doubles.

Every image-side backend takes unit-range N x 3 x H x W tensors and resizes
to its own input side at the boundary. Embeddings are returned as N x d
unit-norm tensors; text embeddings as a d-vector.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

NORM_EPS = 1e-12


class UnknownBackendError(KeyError):
    pass


class DuplicateBackendError(ValueError):
    pass


class BackendUnavailableError(RuntimeError):
    """A pretrained adapter was requested but its weights are not on disk."""


def l2_normalize(v: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return v / v.norm(dim=dim, keepdim=True).clamp_min(NORM_EPS)


def resize_to(x: torch.Tensor, side: int) -> torch.Tensor:
    """Linear resize of an N x C x H x W batch to side x side."""
    h, w = x.shape[-2:]
    if (h, w) == (side, side):
        return x
    if h >= side and w >= side:
        return F.interpolate(x, size=(side, side), mode="area")
    return F.interpolate(x, size=(side, side), mode="bilinear", align_corners=False)


@runtime_checkable
class ImageTextEncoder(Protocol):
    dim: int

    def encode_image(self, x: torch.Tensor) -> torch.Tensor: ...

    def encode_text(self, text: str) -> torch.Tensor: ...


@runtime_checkable
class FaceEncoder(Protocol):
    dim: int

    def encode(self, x: torch.Tensor) -> torch.Tensor: ...


@runtime_checkable
class FeatureExtractor(Protocol):
    def features(self, x: torch.Tensor) -> list[torch.Tensor]: ...


@runtime_checkable
class AgePredictor(Protocol):
    def predict(self, x: torch.Tensor) -> torch.Tensor: ...


@dataclass(frozen=True)
class TestDoubleSpec:
    seed: int = 0
    dim: int = 64
    input_side: int = 16
    gain: float = 2.0

    __test__ = False  # not a pytest class


def _rng(seed: int, *salt: str) -> np.random.Generator:
    h = hashlib.sha256("/".join([str(seed), *salt]).encode()).digest()
    return np.random.default_rng(int.from_bytes(h[:8], "little"))


class _RandomProjection(nn.Module):
    """x -> normalize(tanh(gain * (W (resize(x) - 0.5) + b)))."""

    def __init__(self, spec: TestDoubleSpec, salt: str):
        super().__init__()
        if spec.dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.spec = spec
        rng = _rng(spec.seed, salt)
        n_in = 3 * spec.input_side**2
        self.register_buffer("weight", torch.from_numpy(rng.standard_normal((spec.dim, n_in)) / np.sqrt(n_in)))
        self.register_buffer("bias", torch.from_numpy(rng.standard_normal(spec.dim) * 0.1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = resize_to(x, self.spec.input_side).flatten(1) - 0.5
        h = torch.tanh(self.spec.gain * (z @ self.weight.to(z.dtype).T + self.bias.to(z.dtype)))
        return l2_normalize(h)


class TestDoubleImageText(nn.Module):
    """Stand-in for a joint image-text model.

    The image branch is a smooth random projection; the text branch is a
    fixed unit vector seeded by a hash of the string, so it carries no
    gradient.
    """

    __test__ = False

    def __init__(self, spec: TestDoubleSpec = TestDoubleSpec()):
        super().__init__()
        self.spec = spec
        self.dim = spec.dim
        self.image_branch = _RandomProjection(spec, "image")

    def encode_image(self, x: torch.Tensor) -> torch.Tensor:
        return self.image_branch(x)

    def encode_text(self, text: str) -> torch.Tensor:
        v = torch.from_numpy(_rng(self.spec.seed, "text", text).standard_normal(self.dim))
        return l2_normalize(v)


class TestDoubleFace(nn.Module):
    __test__ = False

    def __init__(self, spec: TestDoubleSpec = TestDoubleSpec(seed=1, dim=128)):
        super().__init__()
        self.spec = spec
        self.dim = spec.dim
        self.branch = _RandomProjection(spec, "face")

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.branch(x)


class TestDoublePerceptual(nn.Module):
    """Two fixed random conv layers with tanh; returns both feature maps."""

    __test__ = False

    def __init__(self, seed: int = 2, input_side: int = 32, channels: tuple[int, ...] = (8, 16)):
        super().__init__()
        self.input_side = input_side
        rng = _rng(seed, "perceptual")
        c_in = 3
        for i, c in enumerate(channels):
            w = rng.standard_normal((c, c_in, 3, 3)) / np.sqrt(9 * c_in)
            self.register_buffer(f"w{i}", torch.from_numpy(w))
            self.register_buffer(f"b{i}", torch.from_numpy(rng.standard_normal(c) * 0.1))
            c_in = c
        self.n_layers = len(channels)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        h = resize_to(x, self.input_side) - 0.5
        feats = []
        for i in range(self.n_layers):
            w, b = getattr(self, f"w{i}").to(h.dtype), getattr(self, f"b{i}").to(h.dtype)
            h = torch.tanh(2.0 * F.conv2d(h, w, b, padding=1))
            feats.append(h)
            if i + 1 < self.n_layers:
                h = F.avg_pool2d(h, 2)
        return feats


class IntensityAgeDouble(nn.Module):
    """Age predictor double: an affine function of mean pixel intensity."""

    __test__ = False

    def __init__(self, offset: float = 5.0, slope: float = 60.0):
        super().__init__()
        self.offset, self.slope = offset, slope

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        return self.offset + self.slope * x.mean(dim=(1, 2, 3))


def make_test_double_image_text(spec: TestDoubleSpec = TestDoubleSpec()) -> TestDoubleImageText:
    return TestDoubleImageText(spec)


# ---------------------------------------------------------------------------
# pretrained adapters; only usable when the weights are already on disk

def cache_dir() -> Path:
    return Path(os.environ.get("DIFFCLEAN_CACHE", Path.home() / ".cache" / "demakeup"))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise BackendUnavailableError(f"{what} not found at {path}; place the weights there or set DIFFCLEAN_CACHE")
    return path


class PretrainedClipAdapter(nn.Module):
    """Wraps a locally stored Hugging Face CLIP checkpoint."""

    MEAN = (0.48145466, 0.4578275, 0.40821073)
    STD = (0.26862954, 0.26130258, 0.27577711)

    def __init__(self, path: str | os.PathLike | None = None):
        super().__init__()
        path = _require(Path(path) if path else cache_dir() / "clip", "CLIP weights")
        from transformers import CLIPModel, CLIPTokenizer

        self.model = CLIPModel.from_pretrained(path, local_files_only=True).eval()
        self.tokenizer = CLIPTokenizer.from_pretrained(path, local_files_only=True)
        self.dim = self.model.config.projection_dim
        self.side = self.model.config.vision_config.image_size

    def encode_image(self, x):
        x = F.interpolate(x, size=(self.side, self.side), mode="bicubic", align_corners=False)
        mean = torch.tensor(self.MEAN, dtype=x.dtype).view(1, 3, 1, 1)
        std = torch.tensor(self.STD, dtype=x.dtype).view(1, 3, 1, 1)
        return l2_normalize(self.model.get_image_features(pixel_values=(x - mean) / std))

    @torch.no_grad()
    def encode_text(self, text):
        tok = self.tokenizer([text], padding=True, return_tensors="pt")
        return l2_normalize(self.model.get_text_features(**tok)[0])


class TorchScriptFaceAdapter(nn.Module):
    """Face encoder loaded from a TorchScript file taking [-1, 1] inputs."""

    def __init__(self, path: str | os.PathLike | None = None, input_side: int = 112):
        super().__init__()
        path = _require(Path(path) if path else cache_dir() / "face.pt", "face encoder")
        self.model = torch.jit.load(str(path)).eval()
        self.input_side = input_side
        with torch.no_grad():
            self.dim = int(self.encode(torch.zeros(1, 3, input_side, input_side)).shape[1])

    def encode(self, x):
        x = F.interpolate(x, size=(self.input_side,) * 2, mode="bilinear", align_corners=False)
        return l2_normalize(self.model(x * 2 - 1))


class VGGPerceptualAdapter(nn.Module):
    """VGG16 relu1_2..relu5_3 features from torchvision weights in the cache."""

    LAYERS = (3, 8, 15, 22, 29)

    def __init__(self, path: str | os.PathLike | None = None):
        super().__init__()
        path = _require(Path(path) if path else cache_dir() / "vgg16.pth", "VGG16 weights")
        from torchvision.models import vgg16

        net = vgg16()
        net.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
        self.body = net.features[: self.LAYERS[-1] + 1].eval()
        for p in self.body.parameters():
            p.requires_grad_(False)

    def features(self, x):
        mean = torch.tensor((0.485, 0.456, 0.406), dtype=x.dtype).view(1, 3, 1, 1)
        std = torch.tensor((0.229, 0.224, 0.225), dtype=x.dtype).view(1, 3, 1, 1)
        h, out = (x - mean) / std, []
        for i, layer in enumerate(self.body):
            h = layer(h)
            if i in self.LAYERS:
                out.append(h)
        return out


class RegressorCheckpointPredictor(nn.Module):
    """External age predictor backed by a saved age-regressor checkpoint."""

    def __init__(self, path: str | os.PathLike | None = None):
        super().__init__()
        from .age import load_regressor

        path = _require(Path(path) if path else cache_dir() / "age_regressor.pt", "age regressor checkpoint")
        self.model = load_regressor(path)

    def predict(self, x):
        return self.model.predict(x)


# ---------------------------------------------------------------------------
# registry

KINDS = ("image_text", "face", "perceptual", "age_predictor")
CONFIG_KEYS = {
    "encoder.image_text": "image_text",
    "encoder.face": "face",
    "encoder.perceptual": "perceptual",
    "eval.age_predictor": "age_predictor",
}

_REGISTRY: dict[str, dict[str, Callable[..., object]]] = {k: {} for k in KINDS}


def register_backend(name: str, factory: Callable[..., object], kind: str = "image_text") -> Callable[..., object]:
    if kind not in _REGISTRY:
        raise ValueError(f"unknown backend kind {kind!r}; expected one of {KINDS}")
    if name in _REGISTRY[kind]:
        raise DuplicateBackendError(f"{kind} backend {name!r} already registered")
    _REGISTRY[kind][name] = factory
    return factory


def unregister_backend(name: str, kind: str = "image_text") -> None:
    _REGISTRY[kind].pop(name, None)


def lookup_backend(name: str, kind: str = "image_text") -> Callable[..., object]:
    try:
        return _REGISTRY[kind][name]
    except KeyError:
        raise UnknownBackendError(
            f"no {kind} backend named {name!r}; known: {sorted(_REGISTRY.get(kind, {}))}"
        ) from None


def build_backend(name: str, kind: str, **kwargs):
    return lookup_backend(name, kind)(**kwargs)


def available_backends(kind: str) -> list[str]:
    return sorted(_REGISTRY[kind])


register_backend("test-double", lambda seed=0, dim=64, input_side=16: TestDoubleImageText(
    TestDoubleSpec(seed=seed, dim=dim, input_side=input_side)), "image_text")
register_backend("pretrained-clip-adapter", PretrainedClipAdapter, "image_text")
register_backend("test-double", lambda seed=1, dim=128, input_side=16: TestDoubleFace(
    TestDoubleSpec(seed=seed, dim=dim, input_side=input_side)), "face")
register_backend("pretrained-face-adapter", TorchScriptFaceAdapter, "face")
register_backend("test-double", TestDoublePerceptual, "perceptual")
register_backend("pretrained-vgg-adapter", VGGPerceptualAdapter, "perceptual")
register_backend("test-double", IntensityAgeDouble, "age_predictor")
register_backend("regressor-checkpoint", RegressorCheckpointPredictor, "age_predictor")
