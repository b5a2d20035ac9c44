"""Cosine noise schedule, step grids and deterministic (eta = 0) DDIM.

Images enter the sampler in signed range as N x 3 x H x W tensors. The clean
image sits at alpha_bar = 1, one level below the first grid timestep, so a
zero noise prediction makes inversion a pure rescale by sqrt(alpha_bar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

BETA_MAX = 0.999
COSINE_OFFSET = 0.008


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T_total(self) -> int:
        return len(self.betas)


def make_cosine_schedule(T_total: int, s: float = COSINE_OFFSET, max_beta: float = BETA_MAX) -> DiffusionSchedule:
    """Improved-DDPM cosine schedule over ``T_total`` steps."""
    if int(T_total) != T_total or T_total < 2:
        raise ValueError(f"T_total must be an integer >= 2, got {T_total}")
    t = np.arange(T_total + 1, dtype=np.float64) / T_total
    f = np.cos((t + s) / (1 + s) * math.pi / 2) ** 2
    betas = np.minimum(1.0 - f[1:] / f[:-1], max_beta)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    for a in (betas, alphas, alpha_bars):
        a.flags.writeable = False
    return DiffusionSchedule(betas, alphas, alpha_bars)


def make_step_grid(n_steps: int, T_total: int, last: int | None = None) -> tuple[int, ...]:
    """Evenly spaced increasing timesteps starting at 0.

    By default the stride is ``T_total // n_steps``. Passing ``last`` instead
    spreads the steps over ``[0, last]`` (floored), which lets a short
    sampling grid end at the same noise level as a longer inversion grid.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if n_steps > T_total:
        raise ValueError(f"n_steps={n_steps} exceeds T_total={T_total}")
    if last is None:
        stride = T_total // n_steps
        return tuple(i * stride for i in range(n_steps))
    if not 0 <= last < T_total or last + 1 < n_steps:
        raise ValueError(f"cannot place {n_steps} steps in [0, {last}]")
    if n_steps == 1:
        return (int(last),)
    grid = tuple(int(math.floor(i * last / (n_steps - 1))) for i in range(n_steps))
    assert all(b > a for a, b in zip(grid, grid[1:]))
    return grid


def _check_grid(grid, schedule: DiffusionSchedule):
    if len(grid) == 0:
        raise ValueError("empty step grid")
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0 or grid[-1] >= schedule.T_total:
        raise ValueError(f"invalid step grid {grid} for T_total={schedule.T_total}")


def _timesteps(t: int, x: torch.Tensor) -> torch.Tensor:
    return torch.full((x.shape[0],), int(t), dtype=torch.long, device=x.device)


def ddim_step(x: torch.Tensor, eps: torch.Tensor, a_from: float, a_to: float) -> torch.Tensor:
    x0 = (x - math.sqrt(1.0 - a_from) * eps) / math.sqrt(a_from)
    return math.sqrt(a_to) * x0 + math.sqrt(1.0 - a_to) * eps


def ddim_invert(x0: torch.Tensor, predictor, schedule: DiffusionSchedule, grid) -> torch.Tensor:
    """Map a signed image to its deterministic latent at ``grid[-1]``."""
    _check_grid(grid, schedule)
    ab = schedule.alpha_bars
    x = x0
    a_from, t_from = 1.0, grid[0]
    for t in grid:
        eps = predictor(x, _timesteps(t_from, x))
        x = ddim_step(x, eps, a_from, float(ab[t]))
        a_from, t_from = float(ab[t]), t
    return x


def ddim_sample(latent: torch.Tensor, predictor, schedule: DiffusionSchedule, grid) -> torch.Tensor:
    """Deterministically denoise a latent at ``grid[-1]`` back to alpha_bar = 1."""
    _check_grid(grid, schedule)
    ab = schedule.alpha_bars
    x = latent
    for i in range(len(grid) - 1, -1, -1):
        t = grid[i]
        a_to = float(ab[grid[i - 1]]) if i > 0 else 1.0
        eps = predictor(x, _timesteps(t, x))
        x = ddim_step(x, eps, float(ab[t]), a_to)
    return x


def timestep_embedding(t: torch.Tensor, dim: int, T_total: int, max_period: float = 1000.0) -> torch.Tensor:
    """Sinusoidal features of normalized time t / T_total.

    Frequencies stay below pi per full schedule so neighbouring timesteps get
    nearly identical features; inversion relies on that smoothness.
    """
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = (t.to(torch.float64) / T_total)[:, None] * freqs[None] * math.pi
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ToyNoisePredictor(nn.Module):
    """Small convolutional eps-predictor with sinusoidal timestep conditioning.

    Stands in for a full diffusion U-Net in desk-scale runs. The net sees the
    rescaled input ``x / sqrt(alpha_bar_t)``, which stays close to the clean
    image along a DDIM trajectory, and its output is multiplied by the fixed
    constant ``out_scale``. Weights are kept at unit scale so an Adam step
    changes eps by a small, bounded fraction; near alpha_bar ~ 1e-4 every unit
    of eps moves the sampled image by tens of units.
    """

    def __init__(self, width: int = 16, depth: int = 2, T_total: int = 80, emb_dim: int = 32,
                 out_scale: float = 1e-4, seed: int = 0):
        super().__init__()
        self.config = dict(width=width, depth=depth, T_total=T_total, emb_dim=emb_dim,
                           out_scale=out_scale, seed=seed)
        self.T_total = T_total
        self.emb_dim = emb_dim
        self.out_scale = out_scale
        ab = torch.from_numpy(make_cosine_schedule(T_total).alpha_bars.copy())
        self.register_buffer("in_scale", ab.rsqrt(), persistent=False)
        gen = torch.Generator().manual_seed(seed)
        self.time_mlp = nn.Sequential(nn.Linear(emb_dim, width), nn.SiLU(), nn.Linear(width, width))
        self.conv_in = nn.Conv2d(3, width, 3, padding=1)
        self.hidden = nn.ModuleList(nn.Conv2d(width, width, 3, padding=1) for _ in range(depth))
        self.conv_out = nn.Conv2d(width, 3, 3, padding=1)
        self._init(gen)

    @torch.no_grad()
    def _init(self, gen: torch.Generator):
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                bound = 1.0 / math.sqrt(m.weight[0].numel())
                m.weight.copy_(torch.rand(m.weight.shape, generator=gen) * 2 * bound - bound)
                m.bias.copy_(torch.rand(m.bias.shape, generator=gen) * 2 * bound - bound)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        u = x * self.in_scale[t].to(x.dtype)[:, None, None, None]
        emb = self.time_mlp(timestep_embedding(t, self.emb_dim, self.T_total).to(x.dtype))
        h = F.silu(self.conv_in(u) + emb[:, :, None, None])
        for conv in self.hidden:
            h = h + F.silu(conv(h))
        return self.out_scale * self.conv_out(h)


class ZeroPredictor(nn.Module):
    def forward(self, x, t):
        return torch.zeros_like(x)
