"""fevpr: place recognition from fused standard-camera frames and event data.

A trainable retrieval pipeline (two-stream encoding, multi-scale fusion,
per-scale VLAD aggregation, learned descriptor re-weighting) plus the
dataset handling, training loop, and evaluation harness around it.
"""

__version__ = "0.1.0"

from .config import ConfigError, TrainConfig, load_config
from .dataset import (
    GeoPoint,
    PlanarPoint,
    PlaceSample,
    Traverse,
    TripletSpec,
    geo_distance,
    load_traverse,
    mine_triplets,
)
from .events import (
    Event,
    EventFrame,
    EventStream,
    EventValidationError,
    EventVolume,
    events_to_frame,
    slice_events,
)

__all__ = [
    "ConfigError",
    "Event",
    "EventFrame",
    "EventStream",
    "EventValidationError",
    "EventVolume",
    "GeoPoint",
    "PlanarPoint",
    "PlaceSample",
    "TrainConfig",
    "Traverse",
    "TripletSpec",
    "__version__",
    "events_to_frame",
    "geo_distance",
    "load_config",
    "load_traverse",
    "mine_triplets",
    "slice_events",
]
