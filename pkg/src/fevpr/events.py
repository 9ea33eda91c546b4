"""Event-camera streams: time-window slicing and per-polarity count frames.

Events are kept as structure-of-arrays (``t, x, y, p``) with microsecond
integer timestamps and polarity in {-1, +1}.  On disk the polarity column
uses {0, 1}; it is remapped on load.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

NORMALIZATIONS = ("none", "max", "count")
WINDOW_MODES = ("centered", "trailing")


class EventValidationError(ValueError):
    """Raised when event data violates its ordering/range contracts."""


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    """Time-ordered events over a fixed sensor geometry.

    Attributes:
        t: int64 timestamps in microseconds, non-decreasing.
        x, y: pixel coordinates (column, row).
        p: polarity, each entry -1 or +1.
        sensor_size: (width, height) of the emitting sensor.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    sensor_size: tuple[int, int]
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        self.sensor_size = (int(self.sensor_size[0]), int(self.sensor_size[1]))
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.p)):
            raise EventValidationError("event columns have mismatched lengths")
        if self.validate:
            self._check()

    def _check(self):
        if len(self.t) and self.t[0] < 0:
            raise EventValidationError(f"negative timestamp {self.t[0]} at index 0")
        if len(self.t) and np.any(np.diff(self.t) < 0):
            bad = int(np.argmax(np.diff(self.t) < 0)) + 1
            raise EventValidationError(
                f"timestamps not sorted: event {bad} precedes event {bad - 1}"
            )
        if len(self.p) and not np.all(np.abs(self.p) == 1):
            bad = int(np.argmax(np.abs(self.p) != 1))
            raise EventValidationError(
                f"polarity must be -1 or +1, got {self.p[bad]} at index {bad}"
            )
        check_bounds(self.x, self.y, self.sensor_size)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))


@dataclass
class EventVolume(EventStream):
    """The events of one time window [t_start, t_end)."""

    t_start: int = 0
    t_end: int = 0

    def __post_init__(self):
        super().__post_init__()
        self.t_start = int(self.t_start)
        self.t_end = int(self.t_end)
        if self.validate and len(self.t):
            if self.t[0] < self.t_start or self.t[-1] >= self.t_end:
                raise EventValidationError(
                    f"events outside window [{self.t_start}, {self.t_end})"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventVolume):
            return NotImplemented
        return (
            self.t_start == other.t_start
            and self.t_end == other.t_end
            and self.sensor_size == other.sensor_size
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )


@dataclass
class EventFrame:
    """2 x H x W per-polarity raster: channel 0 holds p=-1 counts, channel 1 p=+1."""

    data: np.ndarray
    normalization: str = "none"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise EventValidationError(
                f"event frame must be (2, H, W), got {self.data.shape}"
            )
        if self.normalization not in NORMALIZATIONS:
            raise EventValidationError(f"unknown normalization {self.normalization!r}")


def check_bounds(x: np.ndarray, y: np.ndarray, sensor_size: tuple[int, int]):
    """Raise EventValidationError naming the first event outside the sensor."""
    width, height = sensor_size
    bad_x = (x < 0) | (x >= width)
    bad_y = (y < 0) | (y >= height)
    bad = bad_x | bad_y
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EventValidationError(
            f"event {i} at (x={int(x[i])}, y={int(y[i])}) outside "
            f"{width}x{height} sensor"
        )


def slice_events(
    stream: EventStream,
    t_center: int,
    window: int,
    mode: str = "centered",
) -> EventVolume:
    """Cut the events falling in one window of `stream`.

    The window is half-open.  ``centered`` spans
    [t_center - window//2, t_center - window//2 + window) so that windows
    placed at consecutive frame timestamps spaced exactly `window` apart
    partition the stream; ``trailing`` spans [t_center - window, t_center).
    """
    if window <= 0:
        raise EventValidationError(f"window must be positive, got {window}")
    if mode not in WINDOW_MODES:
        raise EventValidationError(f"unknown window mode {mode!r}")
    t = np.asarray(stream.t, dtype=np.int64)
    if len(t) and np.any(np.diff(t) < 0):
        raise EventValidationError("cannot slice an unsorted event stream")
    if mode == "centered":
        lo = int(t_center) - window // 2
    else:
        lo = int(t_center) - window
    hi = lo + window
    i0 = int(np.searchsorted(t, lo, side="left"))
    i1 = int(np.searchsorted(t, hi, side="left"))
    return EventVolume(
        t=t[i0:i1].copy(),
        x=np.asarray(stream.x)[i0:i1].copy(),
        y=np.asarray(stream.y)[i0:i1].copy(),
        p=np.asarray(stream.p)[i0:i1].copy(),
        sensor_size=stream.sensor_size,
        t_start=lo,
        t_end=hi,
        validate=False,
    )


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix splitting each input cell's mass by overlap area.

    Columns sum to 1, so applying it along an axis conserves the total.
    """
    scale = n_out / n_in
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_in):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_out)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[j, i] = overlap / scale
    return weights


def resample_area(image: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Area-weighted resampling of a (..., H, W) raster to (width, height).

    Each input cell's value is redistributed over the output cells it
    overlaps, proportionally to the overlap area; the total is conserved.
    """
    out_w, out_h = out_size
    in_h, in_w = image.shape[-2:]
    if (in_w, in_h) == (out_w, out_h):
        return image.astype(np.float64, copy=True)
    ry = _overlap_weights(in_h, out_h)
    rx = _overlap_weights(in_w, out_w)
    flat = image.reshape(-1, in_h, in_w).astype(np.float64)
    out = np.einsum("oi,cij,pj->cop", ry, flat, rx)
    return out.reshape(image.shape[:-2] + (out_h, out_w))


def events_to_frame(
    volume: EventVolume,
    out_size: tuple[int, int] | None = None,
    normalization: str = "max",
) -> EventFrame:
    """Rasterize an event volume into a 2-channel per-polarity count frame.

    Counts are accumulated at sensor resolution, resampled to `out_size`
    by area weighting, then normalized: ``none`` keeps raw counts, ``max``
    scales each channel into [0, 1] by its peak, ``count`` divides by the
    total number of events.
    """
    if normalization not in NORMALIZATIONS:
        raise EventValidationError(f"unknown normalization {normalization!r}")
    width, height = volume.sensor_size
    if out_size is None:
        out_size = (width, height)
    out_w, out_h = int(out_size[0]), int(out_size[1])
    if out_w <= 0 or out_h <= 0:
        raise EventValidationError(f"out_size must be positive, got {out_size}")
    check_bounds(volume.x, volume.y, volume.sensor_size)

    counts = np.zeros((2, height, width), dtype=np.float64)
    if len(volume):
        channel = (volume.p > 0).astype(np.int64)  # 0: negative, 1: positive
        np.add.at(counts, (channel, volume.y, volume.x), 1.0)

    raster = resample_area(counts, (out_w, out_h))

    if normalization == "max":
        peak = raster.reshape(2, -1).max(axis=1)
        for c in range(2):
            if peak[c] > 0:
                raster[c] /= peak[c]
    elif normalization == "count":
        total = raster.sum()
        if total > 0:
            raster /= total
    return EventFrame(data=raster.astype(np.float32), normalization=normalization)


def empty_volume(
    sensor_size: tuple[int, int], t_start: int = 0, t_end: int = 1
) -> EventVolume:
    zeros = np.zeros(0, dtype=np.int64)
    return EventVolume(
        t=zeros, x=zeros, y=zeros, p=zeros,
        sensor_size=sensor_size, t_start=t_start, t_end=t_end,
    )


def load_events(path: str | Path, sensor_size: tuple[int, int]) -> EventStream:
    """Read an event table: one `t_us x y p` row per event, p in {0, 1}.

    `.npy` files holding an (N, 4) integer array are accepted as the
    binary variant of the same table.
    """
    path = Path(path)
    if path.suffix == ".npy":
        table = np.load(path)
    elif path.stat().st_size == 0:
        table = np.zeros((0, 4), dtype=np.int64)
    else:
        table = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if table.size == 0:
        table = np.zeros((0, 4), dtype=np.int64)
    if table.ndim != 2 or table.shape[1] != 4:
        raise EventValidationError(
            f"{path}: expected 4 columns (t_us, x, y, p), got shape {table.shape}"
        )
    table = table.astype(np.int64)
    p_disk = table[:, 3]
    if len(p_disk) and not np.all((p_disk == 0) | (p_disk == 1)):
        bad = int(np.argmax((p_disk != 0) & (p_disk != 1)))
        raise EventValidationError(
            f"{path}: on-disk polarity must be 0 or 1, got {p_disk[bad]} at row {bad}"
        )
    return EventStream(
        t=table[:, 0],
        x=table[:, 1],
        y=table[:, 2],
        p=2 * p_disk - 1,
        sensor_size=sensor_size,
    )


def save_events(path: str | Path, stream: EventStream):
    """Write a stream back to the on-disk table format (p mapped to {0, 1})."""
    path = Path(path)
    table = np.stack(
        [stream.t, stream.x, stream.y, (stream.p + 1) // 2], axis=1
    ).astype(np.int64)
    if path.suffix == ".npy":
        np.save(path, table)
    else:
        np.savetxt(path, table, fmt="%d")
