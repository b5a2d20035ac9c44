"""Versioned checkpoint container.

A checkpoint is a ``torch.save`` zip archive holding one dict::

    {"format": "demakeup-checkpoint", "version": 1, "kind": <str>,
     "arch": <constructor kwargs>, "state_dict": <tensors>, "extra": <dict>}

``kind`` is ``"noise_predictor"`` or ``"age_regressor"``. Loading uses
``weights_only=True``, so only tensors and plain containers are accepted.
"""

from __future__ import annotations

from pathlib import Path

import torch

FORMAT = "demakeup-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, kind: str, arch: dict, state_dict: dict, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "arch": dict(arch),
        "state_dict": {k: v.detach().clone() for k, v in state_dict.items()},
        "extra": dict(extra or {}),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path, kind: str | None = None) -> dict:
    try:
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path}: missing {FORMAT} header")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if kind is not None and payload.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {payload.get('kind')}")
    return payload
