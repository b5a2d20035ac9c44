"""Proxy age regressor trained with an age-weighted, self-adjusting smooth L1."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .types import AGE_SIDE, DimensionMismatchError, ImageTensor, validate_image

log = logging.getLogger(__name__)

WEIGHTED_BAND = (10.0, 29.0)
BAND_WEIGHT = 3.0


def _check_beta(beta):
    if not float(beta) > 0:
        raise ValueError(f"beta must be > 0, got {beta}")


def smoothed_l1(a, a_hat, beta):
    """Quadratic inside |a - a_hat| < beta, linear outside, continuous at beta."""
    _check_beta(beta)
    scalar = not (torch.is_tensor(a) or torch.is_tensor(a_hat))
    a_hat = torch.as_tensor(a_hat, dtype=torch.float64) if not torch.is_tensor(a_hat) else a_hat
    a = torch.as_tensor(a, dtype=a_hat.dtype) if not torch.is_tensor(a) else a.to(a_hat.dtype)
    d = (a - a_hat).abs()
    out = torch.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return float(out) if scalar else out


def age_weight(a):
    lo, hi = WEIGHTED_BAND
    if torch.is_tensor(a):
        return torch.where((a >= lo) & (a <= hi), BAND_WEIGHT, 1.0).to(a.dtype)
    return BAND_WEIGHT if lo <= a <= hi else 1.0


def weighted_loss(a, a_hat, beta):
    """Smoothed L1 scaled by 3 when the true age lies in [10, 29]."""
    return age_weight(a) * smoothed_l1(a, a_hat, beta)


@dataclass(frozen=True)
class SelfAdjustingBeta:
    beta: float = 1.0
    running_mean: float = 1.0
    running_var: float = 0.0
    momentum: float = 0.9
    beta_min: float = 0.1
    beta_max: float = 5.0

    def __post_init__(self):
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        if not 0 < self.beta_min <= self.beta_max:
            raise ValueError("need 0 < beta_min <= beta_max")


def update_beta(state: SelfAdjustingBeta, batch_abs_errors) -> SelfAdjustingBeta:
    """EMA update of error mean/variance, then beta = clamp(mean - var)."""
    e = np.asarray(batch_abs_errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise ValueError("empty error batch")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("absolute errors must be finite and >= 0")
    m = state.momentum
    mean = m * state.running_mean + (1 - m) * float(e.mean())
    var = m * state.running_var + (1 - m) * float(e.var())
    beta = min(max(mean - var, state.beta_min), state.beta_max)
    return replace(state, beta=beta, running_mean=mean, running_var=var)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 200
    patience: int = 15
    val_fraction: float = 0.2
    beta_init: float = 1.0
    beta_momentum: float = 0.9
    beta_min: float = 0.1
    beta_max: float = 5.0
    max_age: float = 70.0
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "lr", "max_epochs", "patience", "beta_init", "max_age"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or not 0 < self.val_fraction < 1:
            raise ValueError("weight_decay must be >= 0 and val_fraction in (0, 1)")


class AgeRegressor(nn.Module):
    """Compact soft stagewise regressor.

    A conv trunk feeds ``stages`` heads; stage s predicts a distribution over
    ``bins`` sub-intervals plus a learned shift per bin and a learned width
    scale, and the stage outputs are combined into a single age in
    [0, max_age] (roughly).
    """

    def __init__(self, stages: int = 3, bins: int = 3, width: int = 16, max_age: float = 101.0,
                 input_side: int = AGE_SIDE):
        super().__init__()
        self.config = dict(stages=stages, bins=bins, width=width, max_age=max_age, input_side=input_side)
        self.stages, self.bins, self.max_age, self.input_side = stages, bins, max_age, input_side
        self.trunk = nn.ModuleList()
        c_in = 3
        for _ in range(stages):
            self.trunk.append(nn.Conv2d(c_in, width, 3, padding=1))
            c_in = width
        self.heads = nn.ModuleList(nn.Linear(width, 2 * bins + 1) for _ in range(stages))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x - 0.5
        age = torch.zeros(x.shape[0], dtype=x.dtype, device=x.device)
        scale = torch.ones_like(age)
        idx = torch.arange(self.bins, dtype=x.dtype, device=x.device)
        for conv, head in zip(self.trunk, self.heads):
            h = F.avg_pool2d(torch.tanh(conv(h)), 2)
            out = head(h.mean(dim=(2, 3)))
            p = torch.softmax(out[:, : self.bins], dim=1)
            eta = torch.tanh(out[:, self.bins: 2 * self.bins])
            delta = torch.tanh(out[:, -1])
            scale = scale * self.bins * (1.0 + delta)
            age = age + (p * (idx + eta)).sum(1) / scale
        return self.max_age * age

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward(x)


def predict_age(model: AgeRegressor, img: ImageTensor) -> float:
    validate_image(img, model.input_side)
    if img.range_tag != "unit":
        raise ValueError("age regressor expects unit-range images")
    was_training = model.training
    model.eval()
    with torch.no_grad():
        p = model(img.to_batch(next(model.parameters()).dtype))
    model.train(was_training)
    return float(p[0])


def _stack(dataset, side: int):
    xs, ys = [], []
    for img, age in dataset:
        if isinstance(img, ImageTensor):
            if img.height != side or img.width != side:
                raise DimensionMismatchError(f"age images must be {side}x{side}, got {img.height}x{img.width}")
            xs.append(img.to_batch()[0])
        else:
            xs.append(torch.as_tensor(img, dtype=torch.float32))
        ys.append(float(age))
    return torch.stack(xs), torch.tensor(ys, dtype=torch.float32)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_mae: float
    beta: float


def train_age_estimator(dataset: Sequence, cfg: TrainConfig = TrainConfig(),
                        model: AgeRegressor | None = None) -> tuple[AgeRegressor, list[EpochMetrics]]:
    """Train with the age-weighted smooth L1 and return the best-validation model."""
    if len(dataset) == 0:
        raise ValueError("empty training dataset")
    torch.manual_seed(cfg.seed)
    model = model or AgeRegressor()
    x, y = _stack(dataset, model.input_side)
    keep = y < cfg.max_age
    x, y = x[keep], y[keep]
    if len(y) < 2:
        raise ValueError("need at least two samples below max_age")
    gen = torch.Generator().manual_seed(cfg.seed)
    perm = torch.randperm(len(y), generator=gen)
    n_val = max(1, int(round(cfg.val_fraction * len(y))))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.max_epochs)
    beta = SelfAdjustingBeta(cfg.beta_init, cfg.beta_init, 0.0, cfg.beta_momentum, cfg.beta_min, cfg.beta_max)

    history: list[EpochMetrics] = []
    best_mae, best_state, stale = math.inf, copy.deepcopy(model.state_dict()), 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = tr_idx[torch.randperm(len(tr_idx), generator=gen)]
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start: start + cfg.batch_size]
            pred = model(x[b])
            loss = weighted_loss(y[b], pred, beta.beta).mean()
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite age loss at epoch {epoch}: beta={beta.beta}, "
                    f"pred range=({pred.min().item()}, {pred.max().item()})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            beta = update_beta(beta, (pred.detach() - y[b]).abs().numpy())
            total += loss.item() * len(b)
            count += len(b)
        sched.step()

        model.eval()
        with torch.no_grad():
            val_mae = (model(x[val_idx]) - y[val_idx]).abs().mean().item()
        history.append(EpochMetrics(epoch, total / count, val_mae, beta.beta))
        log.debug("epoch %d loss %.4f val_mae %.3f beta %.3f", epoch, total / count, val_mae, beta.beta)
        if val_mae < best_mae:
            best_mae, best_state, stale = val_mae, copy.deepcopy(model.state_dict()), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, history


def save_regressor(model: AgeRegressor, path, extra: dict | None = None):
    from .checkpoint import save_checkpoint

    save_checkpoint(path, "age_regressor", model.config, model.state_dict(), extra)


def load_regressor(path) -> AgeRegressor:
    from .checkpoint import load_checkpoint

    ck = load_checkpoint(path, "age_regressor")
    model = AgeRegressor(**ck["arch"])
    model.load_state_dict(ck["state_dict"])
    return model.eval()


def metrics_rows(history: list[EpochMetrics]) -> list[dict]:
    return [asdict(m) for m in history]
