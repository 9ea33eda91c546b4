"""Checkpoint container: model + optimizer state, config snapshot, history."""

from __future__ import annotations

from pathlib import Path

import torch

from .config import TrainConfig
from .models.network import DescriptorNetwork

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    model: DescriptorNetwork,
    config: TrainConfig,
    optimizer: torch.optim.Optimizer | None = None,
    epoch: int = 0,
    history: dict | None = None,
    checkpoint_id: str = "",
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "checkpoint_id": checkpoint_id or path.stem,
        "config": config.to_dict(),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": int(epoch),
        "history": history or {},
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    return payload


def model_from_checkpoint(payload: dict) -> tuple[DescriptorNetwork, TrainConfig]:
    config = TrainConfig(**payload["config"]).validate()
    model = DescriptorNetwork.from_config(config)
    model.load_state_dict(payload["model_state"], strict=True)
    model.eval()
    return model, config
