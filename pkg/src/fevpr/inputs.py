"""Turning traverse samples into network input tensors, with an on-disk cache."""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import Traverse
from .events import events_to_frame

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "FEVPR_CACHE_DIR"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fevpr"


def resize_frame(frame: np.ndarray, size: int) -> np.ndarray:
    """Bilinear-resize an (H, W) image to (size, size)."""
    if frame.shape == (size, size):
        return frame.astype(np.float32)
    tensor = torch.from_numpy(frame.astype(np.float32))[None, None]
    out = F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
    return out[0, 0].numpy()


def cache_key(traverse: Traverse, window_us: int, window_mode: str,
              out_size: int, normalization: str) -> str:
    ident = "|".join(
        [
            traverse.name,
            str(len(traverse)),
            str(int(traverse.timestamps[0])) if len(traverse) else "0",
            str(window_us),
            window_mode,
            str(out_size),
            normalization,
        ]
    )
    return hashlib.sha1(ident.encode()).hexdigest()[:16]


def event_frame_cache_path(cache_dir: Path, traverse: Traverse, window_us: int,
                           window_mode: str, out_size: int, normalization: str) -> Path:
    key = cache_key(traverse, window_us, window_mode, out_size, normalization)
    return cache_dir / f"event_frames_{traverse.name}_{key}.npz"


def compute_event_frames(
    traverse: Traverse, out_size: int, normalization: str
) -> np.ndarray:
    """(N, 2, out_size, out_size) float32 per-polarity rasters for a traverse."""
    frames = [
        events_to_frame(s.event_volume, (out_size, out_size), normalization).data
        for s in traverse.samples
    ]
    return np.stack(frames).astype(np.float32)


def cached_event_frames(
    traverse: Traverse,
    window_us: int,
    window_mode: str,
    out_size: int,
    normalization: str,
    cache_dir: Path | None = None,
    write: bool = False,
) -> np.ndarray:
    """Load the traverse's event frames from cache, computing (and optionally
    storing) them on a miss."""
    cache_dir = cache_dir or default_cache_dir()
    path = event_frame_cache_path(
        cache_dir, traverse, window_us, window_mode, out_size, normalization
    )
    if path.is_file():
        with np.load(path) as data:
            return data["event_frames"]
    frames = compute_event_frames(traverse, out_size, normalization)
    if write:
        cache_dir.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, event_frames=frames,
                            timestamps=traverse.timestamps)
        log.info("cached event frames -> %s", path)
    return frames


class TraverseTensors:
    """Materialized network inputs for one traverse.

    Holds (N, 1, S, S) frames and (N, 2, S, S) event rasters as float32
    torch tensors; indexing assembles batches without further conversion.
    """

    def __init__(
        self,
        traverse: Traverse,
        input_size: int,
        window_us: int,
        window_mode: str,
        event_normalization: str,
        cache_dir: Path | None = None,
        use_cache: bool = True,
    ):
        self.traverse = traverse
        self.input_size = input_size
        frames = np.stack(
            [resize_frame(s.frame, input_size) for s in traverse.samples]
        )[:, None]
        if use_cache:
            events = cached_event_frames(
                traverse, window_us, window_mode, input_size,
                event_normalization, cache_dir,
            )
        else:
            events = compute_event_frames(traverse, input_size, event_normalization)
        self.frames = torch.from_numpy(frames.astype(np.float32))
        self.event_frames = torch.from_numpy(events.astype(np.float32))

    def __len__(self) -> int:
        return len(self.traverse)

    def batch(self, indices) -> tuple[torch.Tensor, torch.Tensor]:
        idx = torch.as_tensor(np.asarray(indices, dtype=np.int64))
        return self.frames[idx], self.event_frames[idx]
