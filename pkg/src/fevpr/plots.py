"""Static matplotlib renderings of report bundles (PR, Recall@N, success maps)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_pr_curve(precision, recall, path: str | Path, label: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    order = np.argsort(np.asarray(recall))
    ax.plot(np.asarray(recall)[order], np.asarray(precision)[order], "-", color="tab:red")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    if label:
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_recall_at_n(recalls: dict, path: str | Path, label: str = "") -> Path:
    ns = sorted(int(n) for n in recalls)
    values = [recalls[n] if n in recalls else recalls[str(n)] for n in ns]
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    ax.plot(ns, values, "o-", color="tab:red")
    ax.set_xlabel("N")
    ax.set_ylabel("Recall@N")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xticks(ns)
    ax.grid(alpha=0.3)
    if label:
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_success_map(
    positions, success, path: str | Path, geodetic: bool = False, label: str = ""
) -> Path:
    positions = np.asarray(positions, dtype=np.float64)
    success = np.asarray(success, dtype=bool)
    # lat/lon rows plot as (lon, lat) = (east, north); planar rows as (x, y)
    east, north = (positions[:, 1], positions[:, 0]) if geodetic else (
        positions[:, 0], positions[:, 1])
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    ax.scatter(east[success], north[success], s=10, c="tab:green", label="success")
    ax.scatter(east[~success], north[~success], s=12, c="tab:red", marker="x",
               label="failure")
    ax.set_xlabel("longitude" if geodetic else "x [m]")
    ax.set_ylabel("latitude" if geodetic else "y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(fontsize=8, loc="best")
    ax.grid(alpha=0.3)
    if label:
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_bundle(bundle_dir: str | Path) -> list[Path]:
    """Re-render every figure of a report bundle from its CSV/JSON files."""
    bundle_dir = Path(bundle_dir)
    written = []

    recalls_file = bundle_dir / "recalls.json"
    meta = json.loads(recalls_file.read_text())
    label = meta.get("name", "")
    recalls = {int(k): v for k, v in meta["recall_at"].items()}
    written.append(plot_recall_at_n(recalls, bundle_dir / "recall_at_n.png", label))

    with open(bundle_dir / "pr.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    precision = np.array([float(r["precision"]) for r in rows])
    recall = np.array([float(r["recall"]) for r in rows])
    written.append(plot_pr_curve(precision, recall, bundle_dir / "pr.png", label))

    with open(bundle_dir / "success_map.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    geodetic = header[0] == "lat"
    written.append(
        plot_success_map(data[:, :2], data[:, 2] > 0.5,
                         bundle_dir / "success_map.png", geodetic, label)
    )
    return written
