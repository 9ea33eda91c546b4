"""Procedural synthetic world for desk-scale end-to-end runs.

Places sit evenly on a planar loop; each has a distinctive procedural
texture.  Traverses render every place with pose jitter, view shift, and
photometric jitter, and synthesize events by thresholding the difference
between two slightly shifted renders.  Directories follow the standard
traverse layout (``frames/``, ``events.dat``, ``poses.csv``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


@dataclass
class SyntheticWorldConfig:
    places: int = 32
    spacing_m: float = 100.0
    image_size: int = 64
    frame_interval_us: int = 1_000_000
    window_us: int = 25_000
    jitter_m: float = 3.5  # per-axis; keeps offsets under 5 m
    motion_px: float = 1.5
    event_threshold: float = 0.05
    seed: int = 0


def place_positions(config: SyntheticWorldConfig) -> np.ndarray:
    """(places, 2) planar meters on a loop with the configured spacing."""
    radius = config.places * config.spacing_m / (2.0 * math.pi)
    angles = 2.0 * math.pi * np.arange(config.places) / config.places
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def place_texture(config: SyntheticWorldConfig, place: int) -> np.ndarray:
    """A distinctive [0.15, 0.85] texture for one place."""
    size = config.image_size
    rng = np.random.default_rng(config.seed * 10_000 + place)
    base = ndimage.gaussian_filter(rng.uniform(0, 1, (size, size)), sigma=size / 16)
    yy, xx = np.mgrid[0:size, 0:size] / size
    for _ in range(3):
        fx, fy = rng.uniform(2, 7, size=2)
        phase = rng.uniform(0, 2 * math.pi)
        base = base + 0.25 * np.sin(2 * math.pi * (fx * xx + fy * yy) + phase)
    lo, hi = base.min(), base.max()
    return (0.15 + 0.7 * (base - lo) / (hi - lo)).astype(np.float32)


def render_view(texture: np.ndarray, shift_px: tuple[float, float],
                gain: float = 1.0, bias: float = 0.0) -> np.ndarray:
    """Shifted (wrap-around), photometrically jittered view of a texture."""
    view = ndimage.shift(texture, shift_px, order=1, mode="grid-wrap")
    return np.clip(gain * view + bias, 0.0, 1.0).astype(np.float32)


def events_from_frame_difference(
    before: np.ndarray, after: np.ndarray, threshold: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Threshold a frame difference into (x, y, p) event arrays, p in {-1, +1}."""
    diff = after.astype(np.float64) - before.astype(np.float64)
    ys, xs = np.nonzero(np.abs(diff) > threshold)
    polarity = np.sign(diff[ys, xs]).astype(np.int64)
    return xs.astype(np.int64), ys.astype(np.int64), polarity


def generate_traverse(
    out_dir: str | Path,
    config: SyntheticWorldConfig,
    name: str,
    traverse_seed: int,
    frame_corruption: str | None = None,
    drop_events: bool = False,
) -> Path:
    """Write one rendered traverse directory; returns its path.

    ``frame_corruption="glare"`` saturates every frame after rendering
    (events stay clean); ``drop_events`` writes an empty event table
    (frames stay clean).
    """
    if frame_corruption not in (None, "glare"):
        raise ValueError(f"unknown frame corruption {frame_corruption!r}")
    root = Path(out_dir) / name
    frame_dir = root / "frames"
    frame_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(traverse_seed)
    positions = place_positions(config)

    pose_rows = ["t_us,x,y"]
    event_rows: list[str] = []
    half = config.window_us // 2
    for i in range(config.places):
        t = (i + 1) * config.frame_interval_us
        texture = place_texture(config, i)
        jitter = rng.uniform(-config.jitter_m, config.jitter_m, size=2)
        shift = rng.uniform(-1.5, 1.5, size=2)
        gain = rng.uniform(0.95, 1.05)
        bias = rng.uniform(-0.02, 0.02)
        # drawn whether or not events are emitted, so the corrupted variants
        # replay exactly the same poses and renders
        motion = config.motion_px + rng.uniform(-0.2, 0.2)
        frame = render_view(texture, (shift[0], shift[1]), gain, bias)

        if not drop_events:
            # constant forward motion along +x, so event signatures are
            # comparable across traverses of the same place
            previous = render_view(texture, (shift[0], shift[1] - motion), gain, bias)
            xs, ys, ps = events_from_frame_difference(
                previous, frame, config.event_threshold
            )
            if len(xs):
                time_rng = np.random.default_rng(traverse_seed * 100_000 + i)
                times = time_rng.integers(t - half, t + half, size=len(xs))
                order = np.lexsort((xs, ys, times))
                for j in order:
                    event_rows.append(
                        f"{times[j]} {xs[j]} {ys[j]} {(ps[j] + 1) // 2}"
                    )

        if frame_corruption == "glare":
            frame = np.clip(0.75 + 3.0 * frame, 0.0, 1.0)

        Image.fromarray((frame * 255).astype(np.uint8), mode="L").save(
            frame_dir / f"{t}.png"
        )
        pose_rows.append(
            f"{t},{positions[i, 0] + jitter[0]:.3f},{positions[i, 1] + jitter[1]:.3f}"
        )

    (root / "poses.csv").write_text("\n".join(pose_rows) + "\n")
    (root / "events.dat").write_text("\n".join(event_rows) + ("\n" if event_rows else ""))
    return root


def generate_world(
    out_dir: str | Path,
    config: SyntheticWorldConfig | None = None,
    corrupted_splits: bool = True,
) -> dict[str, Path]:
    """Write a database traverse, a clean query traverse, and (optionally)
    glare / no-event corrupted copies of the query traverse."""
    config = config or SyntheticWorldConfig()
    out_dir = Path(out_dir)
    paths = {
        "database": generate_traverse(out_dir, config, "database", config.seed + 1),
        "query": generate_traverse(out_dir, config, "query", config.seed + 2),
    }
    if corrupted_splits:
        paths["query_glare"] = generate_traverse(
            out_dir, config, "query_glare", config.seed + 2, frame_corruption="glare"
        )
        paths["query_noevents"] = generate_traverse(
            out_dir, config, "query_noevents", config.seed + 2, drop_events=True
        )
    return paths
