"""Shared value types and range conventions.

Diffusion math runs on signed images in [-1, 1]; encoders and file I/O use
unit images in [0, 1]. Conversions happen explicitly at module boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import torch

RangeTag = Literal["unit", "signed"]

RANGE_BOUNDS: dict[str, tuple[float, float]] = {"unit": (0.0, 1.0), "signed": (-1.0, 1.0)}
RANGE_TOL = 1e-6

DIFFUSION_SIDE = 256
AGE_SIDE = 64


class DimensionMismatchError(ValueError):
    pass


class RangeViolationError(ValueError):
    pass


class AgeNotCoveredError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """An H x W x 3 float image with a declared value range."""

    values: np.ndarray
    range_tag: RangeTag = "unit"

    def __post_init__(self):
        if self.range_tag not in RANGE_BOUNDS:
            raise ValueError(f"unknown range tag {self.range_tag!r}")
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError(f"expected H x W x 3 image, got shape {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def to_batch(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """Return a 1 x 3 x H x W torch tensor."""
        return torch.tensor(self.values.transpose(2, 0, 1), dtype=dtype)[None]

    @classmethod
    def from_batch(cls, batch: torch.Tensor, range_tag: RangeTag = "unit", index: int = 0) -> "ImageTensor":
        x = batch.detach()
        if x.ndim == 4:
            x = x[index]
        return cls(x.to(torch.float64).permute(1, 2, 0).cpu().numpy(), range_tag)


def validate_image(img: ImageTensor, expected_side: int | None = None) -> ImageTensor:
    """Check dimensions, finiteness and value range; return ``img`` unchanged."""
    if expected_side is not None and (img.height != expected_side or img.width != expected_side):
        raise DimensionMismatchError(
            f"expected {expected_side}x{expected_side} image, got {img.height}x{img.width}"
        )
    v = img.values
    if not np.all(np.isfinite(v)):
        raise RangeViolationError("image contains non-finite values")
    lo, hi = RANGE_BOUNDS[img.range_tag]
    if v.min() < lo - RANGE_TOL or v.max() > hi + RANGE_TOL:
        raise RangeViolationError(
            f"values [{v.min():.9g}, {v.max():.9g}] outside {img.range_tag} range [{lo}, {hi}]"
        )
    return img


def to_signed(x):
    return x * 2.0 - 1.0


def to_unit(x):
    return (x + 1.0) * 0.5


def convert_range(img: ImageTensor, target: RangeTag) -> ImageTensor:
    if target == img.range_tag:
        return img
    if target == "signed":
        return ImageTensor(to_signed(img.values), "signed")
    if target == "unit":
        return ImageTensor(to_unit(img.values), "unit")
    raise ValueError(f"unknown range tag {target!r}")


@dataclass(frozen=True)
class AgeGroupBins:
    """Ordered, disjoint, inclusive integer-year bins.

    A real-valued age ``a`` belongs to the bin containing ``floor(a)``, so the
    10-14 bin covers [10, 15).
    """

    edges: tuple[tuple[int, int], ...] = field(
        default=((0, 2), (3, 6), (7, 9), (10, 14), (15, 19), (20, 29), (30, 39), (40, 49), (50, 69))
    )

    def __post_init__(self):
        edges = tuple((int(lo), int(hi)) for lo, hi in self.edges)
        if not edges:
            raise ValueError("at least one bin is required")
        for (lo, hi), nxt in zip(edges, edges[1:] + ((None, None),)):
            if lo > hi:
                raise ValueError(f"bin ({lo}, {hi}) is empty")
            if nxt[0] is not None and nxt[0] != hi + 1:
                raise ValueError("bins must be contiguous and ascending")
        object.__setattr__(self, "edges", edges)

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def lower(self) -> int:
        return self.edges[0][0]

    @property
    def upper(self) -> int:
        return self.edges[-1][1]

    def covers(self, age: float) -> bool:
        return math.isfinite(age) and self.lower <= math.floor(age) <= self.upper

    def bin_of(self, age: float) -> int:
        if not self.covers(age):
            raise AgeNotCoveredError(f"age {age} outside binned range [{self.lower}, {self.upper}]")
        a = math.floor(age)
        for i, (lo, hi) in enumerate(self.edges):
            if lo <= a <= hi:
                return i
        raise AssertionError("unreachable")

    def label(self, index: int) -> str:
        lo, hi = self.edges[index]
        return f"{lo}-{hi}"


def default_age_bins() -> AgeGroupBins:
    return AgeGroupBins()


def age_bins_from_edges(edges: Sequence[Sequence[int]]) -> AgeGroupBins:
    return AgeGroupBins(tuple((int(a), int(b)) for a, b in edges))


@dataclass(frozen=True, eq=False)
class MakeupPair:
    clean: ImageTensor
    made_up: ImageTensor
    age_years: float
    source_id: str = ""
    style: str = ""

    def __post_init__(self):
        if self.clean.values.shape != self.made_up.values.shape:
            raise DimensionMismatchError(
                f"pair {self.source_id!r}: clean {self.clean.values.shape} vs made-up {self.made_up.values.shape}"
            )
        if not (0.0 <= float(self.age_years) <= 120.0):
            raise ValueError(f"pair {self.source_id!r}: age {self.age_years} outside [0, 120]")
