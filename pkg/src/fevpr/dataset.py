"""Traverse recordings and weakly supervised triplet mining.

A traverse directory holds ``frames/<t_us>.png`` (8-bit grayscale),
``events.dat`` (see :mod:`fevpr.events`) and ``poses.csv`` with header
``t_us,lat,lon`` (geodetic degrees) or ``t_us,x,y`` (planar meters).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .events import EventStream, EventVolume, load_events, slice_events

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8


class DatasetError(ValueError):
    """Raised for malformed traverse directories or inconsistent inputs."""


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic position in degrees."""

    lat: float
    lon: float


@dataclass(frozen=True)
class PlanarPoint:
    """Planar position in meters."""

    x: float
    y: float


Position = GeoPoint | PlanarPoint


def geo_distance(a: Position, b: Position) -> float:
    """Distance in meters: haversine for geodetic points, Euclidean for planar."""
    if isinstance(a, GeoPoint) and isinstance(b, GeoPoint):
        return haversine_m(a.lat, a.lon, b.lat, b.lon)
    if isinstance(a, PlanarPoint) and isinstance(b, PlanarPoint):
        return math.hypot(a.x - b.x, a.y - b.y)
    raise DatasetError(
        f"mixed coordinate conventions: {type(a).__name__} vs {type(b).__name__}"
    )


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def planar_from_geodetic(latlon: np.ndarray, origin: tuple[float, float]) -> np.ndarray:
    """Equirectangular projection of (N, 2) lat/lon degrees to local meters."""
    lat0, lon0 = origin
    lat0_rad = math.radians(lat0)
    out = np.empty_like(latlon, dtype=np.float64)
    out[:, 0] = np.radians(latlon[:, 1] - lon0) * math.cos(lat0_rad) * EARTH_RADIUS_M
    out[:, 1] = np.radians(latlon[:, 0] - lat0) * EARTH_RADIUS_M
    return out


@dataclass
class PlaceSample:
    """One aligned (intensity frame, event window, position, timestamp) record."""

    frame: np.ndarray  # (H, W) float32 in [0, 1]
    event_volume: EventVolume
    position: Position
    timestamp: int  # microseconds


@dataclass
class Traverse:
    """An ordered pass through the environment."""

    samples: list[PlaceSample]
    name: str
    geodetic: bool

    def __post_init__(self):
        ts = self.timestamps
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise DatasetError(f"traverse {self.name!r}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples], dtype=np.int64)

    @property
    def positions(self) -> np.ndarray:
        """(N, 2) raw coordinates: lat/lon degrees or planar meters."""
        if self.geodetic:
            return np.array(
                [[s.position.lat, s.position.lon] for s in self.samples], dtype=np.float64
            )
        return np.array(
            [[s.position.x, s.position.y] for s in self.samples], dtype=np.float64
        )

    def planar_positions(self, origin: tuple[float, float] | None = None) -> np.ndarray:
        """(N, 2) positions in meters, projected about `origin` if geodetic."""
        pos = self.positions
        if not self.geodetic:
            return pos
        if origin is None:
            origin = (float(pos[:, 0].mean()), float(pos[:, 1].mean()))
        return planar_from_geodetic(pos, origin)


def shared_planar_positions(
    query: Traverse, database: Traverse
) -> tuple[np.ndarray, np.ndarray]:
    """Project both traverses into one planar frame (meters)."""
    if query.geodetic != database.geodetic:
        raise DatasetError(
            f"mixed coordinate conventions: query {query.name!r} is "
            f"{'geodetic' if query.geodetic else 'planar'} but database "
            f"{database.name!r} is {'geodetic' if database.geodetic else 'planar'}"
        )
    if not query.geodetic:
        return query.positions, database.positions
    both = np.vstack([query.positions, database.positions])
    origin = (float(both[:, 0].mean()), float(both[:, 1].mean()))
    return query.planar_positions(origin), database.planar_positions(origin)


@dataclass
class TraverseConfig:
    """How raw recordings are turned into aligned samples."""

    window_us: int = 25_000
    window_mode: str = "centered"
    sensor_size: tuple[int, int] | None = None  # default: frame size
    max_pose_gap_us: int = 1_000_000


def _load_frame(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32)
    except OSError as exc:
        raise DatasetError(f"unreadable frame {path}: {exc}") from exc
    return arr / 255.0


def _load_poses(path: Path) -> tuple[np.ndarray, np.ndarray, bool]:
    if not path.is_file():
        raise DatasetError(f"missing pose file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"empty pose file: {path}") from None
        if header == ["t_us", "lat", "lon"]:
            geodetic = True
        elif header == ["t_us", "x", "y"]:
            geodetic = False
        else:
            raise DatasetError(
                f"{path}: header must be 't_us,lat,lon' or 't_us,x,y', got {header}"
            )
        rows = [(int(r[0]), float(r[1]), float(r[2])) for r in reader if r]
    if not rows:
        raise DatasetError(f"{path}: no pose rows")
    rows.sort(key=lambda r: r[0])
    t = np.array([r[0] for r in rows], dtype=np.int64)
    coords = np.array([[r[1], r[2]] for r in rows], dtype=np.float64)
    return t, coords, geodetic


def _nearest_pose(pose_t: np.ndarray, t: int) -> int:
    i = int(np.searchsorted(pose_t, t))
    candidates = [j for j in (i - 1, i) if 0 <= j < len(pose_t)]
    return min(candidates, key=lambda j: abs(int(pose_t[j]) - t))


def load_traverse(
    root: str | Path,
    config: TraverseConfig | None = None,
    name: str | None = None,
) -> Traverse:
    """Load one traverse directory into aligned PlaceSamples.

    Each intensity frame gets the event window centered (or trailing, per
    config) on its timestamp and the nearest-in-time pose; frames whose
    nearest pose is farther than ``max_pose_gap_us`` are dropped and the
    drop count logged.
    """
    root = Path(root)
    config = config or TraverseConfig()
    frame_dir = root / "frames"
    if not frame_dir.is_dir():
        raise DatasetError(f"missing frame directory: {frame_dir}")
    frame_paths = sorted(frame_dir.glob("*.png"), key=lambda p: int(p.stem))
    if not frame_paths:
        raise DatasetError(f"no frames in {frame_dir}")

    pose_t, pose_xy, geodetic = _load_poses(root / "poses.csv")

    first_frame = _load_frame(frame_paths[0])
    sensor_size = config.sensor_size or (first_frame.shape[1], first_frame.shape[0])
    events_path = root / "events.dat"
    if events_path.is_file():
        stream = load_events(events_path, sensor_size)
    else:
        stream = EventStream(
            t=np.zeros(0, np.int64), x=np.zeros(0, np.int64),
            y=np.zeros(0, np.int64), p=np.zeros(0, np.int64),
            sensor_size=sensor_size,
        )

    samples: list[PlaceSample] = []
    dropped = 0
    for path in frame_paths:
        t = int(path.stem)
        j = _nearest_pose(pose_t, t)
        if abs(int(pose_t[j]) - t) > config.max_pose_gap_us:
            dropped += 1
            continue
        frame = first_frame if path is frame_paths[0] else _load_frame(path)
        volume = slice_events(stream, t, config.window_us, config.window_mode)
        position: Position
        if geodetic:
            position = GeoPoint(lat=pose_xy[j, 0], lon=pose_xy[j, 1])
        else:
            position = PlanarPoint(x=pose_xy[j, 0], y=pose_xy[j, 1])
        samples.append(
            PlaceSample(frame=frame, event_volume=volume, position=position, timestamp=t)
        )
    if dropped:
        log.info("traverse %s: dropped %d frame(s) without a pose within %d us",
                 root.name, dropped, config.max_pose_gap_us)
    if not samples:
        raise DatasetError(f"{root}: every frame was dropped for missing poses")
    return Traverse(samples=samples, name=name or root.name, geodetic=geodetic)


@dataclass
class TripletSpec:
    """Weak supervision for one query: geographic positives and sampled negatives."""

    query_index: int
    potential_positive_indices: list[int]
    negative_indices: list[int]


def mine_triplets(
    query: Traverse,
    database: Traverse,
    positive_radius_m: float = 25.0,
    negative_radius_m: float = 75.0,
    negatives_per_query: int = 10,
    seed: int = 0,
) -> list[TripletSpec]:
    """Mine (query, potential positives, random negatives) index triples.

    Positives are database samples within ``positive_radius_m`` of the
    query; the negative pool is everything beyond ``negative_radius_m``,
    from which ``negatives_per_query`` are drawn under `seed`.  Queries
    with no potential positive are skipped (and counted in the log).
    """
    if positive_radius_m >= negative_radius_m:
        raise DatasetError(
            f"positive radius {positive_radius_m} must be below negative "
            f"radius {negative_radius_m}"
        )
    q_pos, db_pos = shared_planar_positions(query, database)
    dists = pairwise_planar_distances(q_pos, db_pos)
    rng = np.random.default_rng(seed)
    specs: list[TripletSpec] = []
    skipped = 0
    for qi in range(len(query)):
        positives = np.nonzero(dists[qi] <= positive_radius_m)[0]
        if len(positives) == 0:
            skipped += 1
            continue
        pool = np.nonzero(dists[qi] > negative_radius_m)[0]
        take = min(negatives_per_query, len(pool))
        negatives = rng.choice(pool, size=take, replace=False) if take else np.array([], int)
        specs.append(
            TripletSpec(
                query_index=qi,
                potential_positive_indices=sorted(int(i) for i in positives),
                negative_indices=sorted(int(i) for i in negatives),
            )
        )
    if skipped:
        log.info("triplet mining: skipped %d quer%s with no potential positive",
                 skipped, "y" if skipped == 1 else "ies")
    return specs


def pairwise_planar_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) Euclidean distances between planar point sets."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))
