"""Retrieval scoring: descriptor indexes, Recall@N, PR curves, success maps.

A report bundle directory holds ``distances.f32`` (little-endian row-major
float32), ``recalls.json``, ``pr.csv`` (header ``threshold,precision,recall``),
``success_map.csv``, and the rendered ``pr.png`` / ``recall_at_n.png`` /
``success_map.png`` figures.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Traverse, pairwise_planar_distances, shared_planar_positions
from .descriptors import save_descriptors
from .inputs import TraverseTensors

log = logging.getLogger(__name__)

DEFAULT_RECALL_NS = (1, 5, 10, 20)


class EvaluationError(ValueError):
    pass


@dataclass
class RetrievalReport:
    """Everything the report bundle serializes for one (query, database) pair."""

    distance_matrix: np.ndarray  # (|Q|, |DB|) descriptor distances
    recalls: dict[int, float]
    pr_thresholds: np.ndarray
    pr_precision: np.ndarray
    pr_recall: np.ndarray
    f1_max: float
    per_query_success: np.ndarray  # bool, one per query
    query_positions: np.ndarray  # raw coordinates (lat/lon or x/y)
    geodetic: bool
    name: str = ""


def build_index(
    model,
    traverse: Traverse,
    input_size: int,
    window_us: int,
    window_mode: str,
    event_normalization: str,
    out_path: str | Path | None = None,
    checkpoint_id: str = "",
    cache_dir: Path | None = None,
    use_cache: bool = False,
    batch_size: int = 16,
) -> np.ndarray:
    """Inference-mode descriptor matrix for a traverse, optionally exported."""
    from .training import compute_descriptors  # local import; no cycle at module load

    tensors = TraverseTensors(
        traverse,
        input_size=input_size,
        window_us=window_us,
        window_mode=window_mode,
        event_normalization=event_normalization,
        cache_dir=cache_dir,
        use_cache=use_cache,
    )
    descriptors = compute_descriptors(model, tensors, batch_size).numpy()
    if out_path is not None:
        save_descriptors(
            out_path, descriptors,
            source_traverse=traverse.name, checkpoint_id=checkpoint_id,
        )
    return descriptors


def descriptor_distances(query_desc: np.ndarray, db_desc: np.ndarray) -> np.ndarray:
    return cdist(
        np.asarray(query_desc, dtype=np.float64),
        np.asarray(db_desc, dtype=np.float64),
    )


def recall_at_n(
    dist: np.ndarray,
    query_positions: np.ndarray,
    db_positions: np.ndarray,
    phi: float,
    ns,
) -> dict[int, float]:
    """Fraction of queries with a within-phi entry among their N nearest.

    Positions are planar meters; Ns above the database size are clipped
    with a warning.
    """
    if phi <= 0:
        raise EvaluationError(f"phi must be positive, got {phi}")
    dist = np.asarray(dist)
    n_q, n_db = dist.shape
    geo = pairwise_planar_distances(query_positions, db_positions)
    within = geo <= phi
    order = np.argsort(dist, axis=1, kind="stable")
    out: dict[int, float] = {}
    for n in ns:
        k = int(n)
        if k > n_db:
            warnings.warn(f"Recall@{k} clipped to database size {n_db}", stacklevel=2)
            k = n_db
        hits = within[np.arange(n_q)[:, None], order[:, :k]].any(axis=1)
        out[int(n)] = float(hits.mean())
    return out


def per_query_success(
    dist: np.ndarray,
    query_positions: np.ndarray,
    db_positions: np.ndarray,
    phi: float,
) -> np.ndarray:
    """Boolean top-1 success flags; their mean equals Recall@1."""
    geo = pairwise_planar_distances(query_positions, db_positions)
    nearest = np.argmin(dist, axis=1)
    return geo[np.arange(dist.shape[0]), nearest] <= phi


def pr_curve(
    dist: np.ndarray,
    query_positions: np.ndarray,
    db_positions: np.ndarray,
    phi: float,
    name: str = "",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-nearest-neighbor threshold sweep -> (thresholds, precision, recall).

    Each query contributes its nearest database entry and that entry's
    descriptor distance as the acceptance score.  At a threshold, accepted
    correct matches (within phi) are true positives, accepted wrong ones
    false positives, and rejected queries that do have a within-phi
    database entry false negatives.  An extra threshold below every score
    anchors the empty-acceptance point (precision 1, recall 0).
    """
    dist = np.asarray(dist)
    geo = pairwise_planar_distances(query_positions, db_positions)
    has_gt = (geo <= phi).any(axis=1)
    if not has_gt.any():
        raise EvaluationError(
            f"PR curve undefined: no query has a database entry within "
            f"{phi} m{f' (split {name})' if name else ''}"
        )
    nearest = np.argmin(dist, axis=1)
    rows = np.arange(dist.shape[0])
    scores = dist[rows, nearest]
    correct = geo[rows, nearest] <= phi

    thresholds = np.unique(scores)
    thresholds = np.concatenate([[thresholds[0] - 1.0], thresholds])
    precision = np.empty(len(thresholds))
    recall = np.empty(len(thresholds))
    for k, tau in enumerate(thresholds):
        accepted = scores <= tau
        tp = int(np.sum(accepted & correct))
        fp = int(np.sum(accepted & ~correct))
        fn = int(np.sum(~accepted & has_gt))
        precision[k] = tp / (tp + fp) if (tp + fp) else 1.0
        recall[k] = tp / (tp + fn) if (tp + fn) else 0.0
    return thresholds, precision, recall


def f1_max(precision: np.ndarray, recall: np.ndarray) -> float:
    """Max over the sweep of 2PR/(P+R), taking 0 where P+R = 0."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    if p.size == 0:
        raise EvaluationError("empty PR curve")
    denom = p + r
    f1 = np.where(denom > 0, 2.0 * p * r / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1.max())


def evaluate_pair(
    query_desc: np.ndarray,
    db_desc: np.ndarray,
    query: Traverse,
    database: Traverse,
    phi: float,
    recall_ns=DEFAULT_RECALL_NS,
    name: str = "",
) -> RetrievalReport:
    q_pos, db_pos = shared_planar_positions(query, database)
    dist = descriptor_distances(query_desc, db_desc)
    recalls = recall_at_n(dist, q_pos, db_pos, phi, recall_ns)
    thresholds, precision, recall = pr_curve(dist, q_pos, db_pos, phi, name=name)
    return RetrievalReport(
        distance_matrix=dist.astype(np.float32),
        recalls=recalls,
        pr_thresholds=thresholds,
        pr_precision=precision,
        pr_recall=recall,
        f1_max=f1_max(precision, recall),
        per_query_success=per_query_success(dist, q_pos, db_pos, phi),
        query_positions=query.positions,
        geodetic=query.geodetic,
        name=name or f"{database.name}_vs_{query.name}",
    )


def success_map_rows(report: RetrievalReport) -> list[tuple[float, float, int]]:
    """One (coordinate pair, success flag) row per query."""
    return [
        (float(p[0]), float(p[1]), int(s))
        for p, s in zip(report.query_positions, report.per_query_success)
    ]


def write_report_bundle(
    report: RetrievalReport, out_dir: str | Path, plots: bool = True
) -> dict[str, Path]:
    """Write the bundle files; returns name -> path for everything written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    dist_path = out_dir / "distances.f32"
    np.ascontiguousarray(report.distance_matrix, dtype="<f4").tofile(dist_path)
    written["distances"] = dist_path

    recalls_path = out_dir / "recalls.json"
    recalls_path.write_text(json.dumps(
        {
            "name": report.name,
            "num_queries": int(report.distance_matrix.shape[0]),
            "num_database": int(report.distance_matrix.shape[1]),
            "recall_at": {str(k): v for k, v in report.recalls.items()},
            "f1_max": report.f1_max,
        },
        indent=2,
    ))
    written["recalls"] = recalls_path

    pr_path = out_dir / "pr.csv"
    lines = ["threshold,precision,recall"]
    lines += [
        f"{t:.9g},{p:.9g},{r:.9g}"
        for t, p, r in zip(report.pr_thresholds, report.pr_precision, report.pr_recall)
    ]
    pr_path.write_text("\n".join(lines) + "\n")
    written["pr"] = pr_path

    map_path = out_dir / "success_map.csv"
    header = "lat,lon,success" if report.geodetic else "x,y,success"
    rows = [header] + [f"{a:.9g},{b:.9g},{s}" for a, b, s in success_map_rows(report)]
    map_path.write_text("\n".join(rows) + "\n")
    written["success_map"] = map_path

    if plots:
        from . import plots as plotmod

        written["pr_png"] = plotmod.plot_pr_curve(
            report.pr_precision, report.pr_recall, out_dir / "pr.png", label=report.name
        )
        written["recall_png"] = plotmod.plot_recall_at_n(
            report.recalls, out_dir / "recall_at_n.png", label=report.name
        )
        written["success_png"] = plotmod.plot_success_map(
            report.query_positions, report.per_query_success,
            out_dir / "success_map.png", geodetic=report.geodetic, label=report.name,
        )
    return written
