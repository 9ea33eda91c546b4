"""Weakly supervised training: triplet ranking loss, hard-negative mining
against a periodically refreshed descriptor cache, and checkpointing."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.cluster import KMeans

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .dataset import DatasetError, Traverse, pairwise_planar_distances, shared_planar_positions
from .evaluation import recall_at_n
from .inputs import TraverseTensors
from .models.network import DescriptorNetwork

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; a state dump path is attached."""


def triplet_ranking_loss(
    query: torch.Tensor,
    positives: torch.Tensor,
    negatives: torch.Tensor,
    margin: float,
) -> torch.Tensor:
    """Sum over negatives of the hinge on squared-distance gaps.

    The anchor target is the best (closest) potential positive:
    ``sum_j max(0, min_i |q - p_i|^2 - |q - n_j|^2 + margin)``.
    """
    if positives.ndim != 2 or positives.shape[0] < 1:
        raise ValueError("need at least one positive descriptor")
    if negatives.ndim != 2 or negatives.shape[0] < 1:
        raise ValueError("need at least one negative descriptor")
    d2_pos = ((positives - query) ** 2).sum(dim=1)
    d2_neg = ((negatives - query) ** 2).sum(dim=1)
    best_pos = d2_pos.min()
    return torch.relu(best_pos - d2_neg + margin).sum()


def compute_descriptors(
    model: DescriptorNetwork, tensors: TraverseTensors, batch_size: int = 16
) -> torch.Tensor:
    """Inference-mode descriptors for every sample of a traverse."""
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(tensors), batch_size):
            idx = np.arange(start, min(start + batch_size, len(tensors)))
            frames, events = tensors.batch(idx)
            chunks.append(model(frames, events))
    return torch.cat(chunks, dim=0)


def _collect_local_features(
    model: DescriptorNetwork, tensors: TraverseTensors, sample_count: int, rng
) -> list[np.ndarray]:
    """Per-VLAD-layer pools of local features from a warm-up inference pass."""
    model.eval()
    n_vlads = len(model.vlads)
    pools: list[list[np.ndarray]] = [[] for _ in range(n_vlads)]
    indices = np.arange(len(tensors))
    if len(indices) > 64:
        indices = rng.choice(indices, size=64, replace=False)
    with torch.no_grad():
        for start in range(0, len(indices), 8):
            frames, events = tensors.batch(indices[start:start + 8])
            _, parts = model(frames, events, return_parts=True)
            if model.use_flatten_concat:
                maps = [parts["flattened"]]
            else:
                maps = list(parts["pyramid"])
            for k, fmap in enumerate(maps):
                flat = fmap.flatten(2) if fmap.dim() == 4 else fmap
                pools[k].append(
                    flat.permute(0, 2, 1).reshape(-1, flat.shape[1]).numpy()
                )
    out = []
    for k in range(n_vlads):
        feats = np.concatenate(pools[k], axis=0)
        if len(feats) > sample_count:
            feats = feats[rng.choice(len(feats), size=sample_count, replace=False)]
        out.append(feats.astype(np.float64))
    return out


def kmeans_centers(features: np.ndarray, clusters: int, seed: int) -> np.ndarray:
    """Cluster centers from 20 k-means iterations under a fixed seed."""
    km = KMeans(n_clusters=clusters, n_init=1, max_iter=20, random_state=seed)
    km.fit(features)
    return km.cluster_centers_


def assignment_sharpness(features: np.ndarray, centers: np.ndarray) -> float:
    """Sharpness making the max soft assignment roughly 0.9 on the samples.

    With scores alpha * (|x|^2 - |x - c_k|^2), the winning probability is
    about 1 / (1 + exp(-alpha * gap)) where gap is the squared-distance
    margin between the two closest centers; alpha = ln 9 / mean-gap puts it
    near 0.9.
    """
    if len(centers) < 2:
        return 1.0
    d2 = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    d2.sort(axis=1)
    gaps = d2[:, 1] - d2[:, 0]
    mean_gap = float(gaps.mean())
    if mean_gap <= 1e-12:
        return 1.0
    return float(np.log(9.0) / mean_gap)


def init_vlad_clusters(
    model: DescriptorNetwork,
    tensors: TraverseTensors,
    config: TrainConfig,
) -> None:
    """K-means initialization of every VLAD layer from warm-up features.

    Falls back to the existing random-normal parameters (with a warning)
    when fewer local features than clusters are available.
    """
    if len(tensors) == 0:
        raise DatasetError("cannot initialize VLAD clusters from an empty traverse")
    rng = np.random.default_rng(config.seed)
    pools = _collect_local_features(model, tensors, config.vlad_init_samples, rng)
    for k, (vlad, feats) in enumerate(zip(model.vlads, pools)):
        if len(feats) < vlad.clusters:
            warnings.warn(
                f"VLAD layer {k}: only {len(feats)} local features for "
                f"{vlad.clusters} clusters; keeping random centers",
                stacklevel=2,
            )
            continue
        centers = kmeans_centers(feats, vlad.clusters, config.seed)
        alpha = assignment_sharpness(feats, centers)
        vlad.init_from_centers(torch.from_numpy(centers), alpha)


def make_optimizer(model: torch.nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "adam":
        return torch.optim.Adam(
            model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
        )
    return torch.optim.SGD(
        model.parameters(), lr=config.learning_rate, momentum=0.9,
        weight_decay=config.weight_decay,
    )


@dataclass
class TrainResult:
    best_path: Path
    last_path: Path
    best_recall1: float
    iterations: int
    history: dict = field(default_factory=dict)


class _TripletIndex:
    """Geometric supervision for one (query, database) traverse pair."""

    def __init__(self, query: Traverse, database: Traverse, config: TrainConfig):
        q_pos, db_pos = shared_planar_positions(query, database)
        self.q_pos = q_pos
        self.db_pos = db_pos
        self.geo = pairwise_planar_distances(q_pos, db_pos)
        self.negative_radius = config.negative_radius_m
        self.positives: list[np.ndarray] = []
        self.neg_pools: list[np.ndarray] = []
        trainable = []
        for qi in range(len(query)):
            within = np.nonzero(self.geo[qi] <= config.positive_radius_m)[0]
            order = np.argsort(self.geo[qi, within], kind="stable")
            self.positives.append(within[order][: config.positives_per_query])
            pool = np.nonzero(self.geo[qi] > config.negative_radius_m)[0]
            self.neg_pools.append(pool)
            if len(within) and len(pool):
                trainable.append(qi)
        if not trainable:
            raise DatasetError(
                "no trainable queries: none has both a potential positive "
                "and a beyond-threshold negative"
            )
        skipped = len(query) - len(trainable)
        if skipped:
            log.info("training: skipped %d queries without positives/negatives", skipped)
        self.trainable = np.array(trainable, dtype=np.int64)

    def hardest_negatives(
        self, qi: int, q_desc: torch.Tensor, db_desc: torch.Tensor, count: int
    ) -> np.ndarray:
        pool = self.neg_pools[qi]
        d2 = ((db_desc[pool] - q_desc[qi]) ** 2).sum(dim=1).numpy()
        chosen = pool[np.argsort(d2, kind="stable")[:count]]
        bad = self.geo[qi, chosen] <= self.negative_radius
        if np.any(bad):  # the pool is built beyond the radius; guard regressions
            raise RuntimeError(
                f"hard-negative selection picked an index within "
                f"{self.negative_radius} m of query {qi}"
            )
        return chosen


def _validation_recall1(
    index: _TripletIndex, q_desc: torch.Tensor, db_desc: torch.Tensor, phi: float
) -> float:
    dist = torch.cdist(q_desc, db_desc).numpy()
    recalls = recall_at_n(dist, index.q_pos, index.db_pos, phi, [1])
    return recalls[1]


def train(
    database: Traverse,
    query: Traverse,
    config: TrainConfig,
    out_dir: str | Path,
    cache_dir: Path | None = None,
    use_cache: bool = False,
) -> TrainResult:
    """Run weakly supervised training and return checkpoint paths + history.

    Saves ``best.ckpt`` (highest validation Recall@1) and ``last.ckpt``,
    and appends one JSON record per batch to ``train_log.jsonl``.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    model = DescriptorNetwork.from_config(config)
    if config.pretrained_backbone:
        from .models.network import load_backbone_weights

        load_backbone_weights(model, config.pretrained_backbone)

    common = dict(
        input_size=config.input_size,
        window_us=config.window_us,
        window_mode=config.window_mode,
        event_normalization=config.event_normalization,
        cache_dir=cache_dir,
        use_cache=use_cache,
    )
    db_tensors = TraverseTensors(database, **common)
    q_tensors = TraverseTensors(query, **common)
    index = _TripletIndex(query, database, config)

    if config.vlad_init == "kmeans":
        init_vlad_clusters(model, db_tensors, config)

    optimizer = make_optimizer(model, config)
    lr = config.learning_rate

    def refresh_caches():
        return compute_descriptors(model, db_tensors), compute_descriptors(model, q_tensors)

    db_desc, q_desc = refresh_caches()

    history: dict = {
        "loss": [], "eval_batches": [], "eval_loss": [], "recall1": [], "lr": [],
    }
    log_path = out_dir / "train_log.jsonl"
    log_file = open(log_path, "w")
    best_recall = -1.0
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    evals_since_improve = 0
    losses_since_eval: list[float] = []
    iteration = 0
    epoch = 0
    stop = False

    def corrupt(frames: torch.Tensor, events: torch.Tensor, iteration: int):
        if iteration < config.aug_warmup_batches:
            return frames, events
        if config.aug_frame_saturate_p > 0:
            mask = rng.random(len(frames)) < config.aug_frame_saturate_p
            frames[torch.from_numpy(mask)] = 1.0
        if config.aug_event_drop_p > 0:
            mask = rng.random(len(events)) < config.aug_event_drop_p
            events[torch.from_numpy(mask)] = 0.0
        return frames, events

    try:
        for epoch in range(config.epochs):
            order = rng.permutation(index.trainable)
            for start in range(0, len(order), config.batch_size):
                if stop:
                    break
                batch_queries = order[start:start + config.batch_size]

                if iteration > 0 and iteration % config.cache_refresh_batches == 0:
                    db_desc, q_desc = refresh_caches()

                frame_parts, event_parts, splits = [], [], []
                for qi in (int(q) for q in batch_queries):
                    negs = index.hardest_negatives(
                        qi, q_desc, db_desc, config.negatives_per_query
                    )
                    if len(negs) == 0:
                        continue
                    pos = index.positives[qi]
                    qf, qe = q_tensors.batch([qi])
                    df, de = db_tensors.batch(np.concatenate([pos, negs]))
                    frame_parts.append(torch.cat([qf, df]))
                    event_parts.append(torch.cat([qe, de]))
                    splits.append((len(pos), len(negs)))
                if not splits:
                    continue

                frames = torch.cat(frame_parts)
                events = torch.cat(event_parts)
                frames, events = corrupt(frames, events, iteration)

                model.train()
                descriptors = model(frames, events)
                loss = descriptors.new_zeros(())
                total_negatives = 0
                row = 0
                for n_pos, n_neg in splits:
                    q_row = descriptors[row]
                    p_rows = descriptors[row + 1: row + 1 + n_pos]
                    n_rows = descriptors[row + 1 + n_pos: row + 1 + n_pos + n_neg]
                    loss = loss + triplet_ranking_loss(q_row, p_rows, n_rows, config.margin)
                    total_negatives += n_neg
                    row += 1 + n_pos + n_neg
                loss = loss / total_negatives

                if not torch.isfinite(loss):
                    dump = save_checkpoint(
                        out_dir / "diverged.ckpt", model, config, optimizer,
                        epoch, history, checkpoint_id="diverged",
                    )
                    raise TrainingDiverged(
                        f"non-finite loss at iteration {iteration}; state dumped to {dump}"
                    )

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                batch_loss = float(loss.detach())
                losses_since_eval.append(batch_loss)
                history["loss"].append(batch_loss)
                iteration += 1

                record = {"epoch": epoch, "batch": iteration, "loss": batch_loss,
                          "lr": lr, "recall1": None}

                if iteration % config.eval_interval_batches == 0:
                    # validation runs on fresh descriptors; the mining cache
                    # keeps its own staleness schedule
                    val_db, val_q = refresh_caches()
                    recall1 = _validation_recall1(
                        index, val_q, val_db, config.true_positive_radius_m
                    )
                    smoothed = float(np.mean(losses_since_eval))
                    losses_since_eval = []
                    history["eval_batches"].append(iteration)
                    history["eval_loss"].append(smoothed)
                    history["recall1"].append(recall1)
                    history["lr"].append(lr)
                    record["recall1"] = recall1
                    log.info(
                        "iter %d: loss (smoothed) %.4f, recall@1 %.4f, lr %.2e",
                        iteration, smoothed, recall1, lr,
                    )
                    if recall1 > best_recall:
                        best_recall = recall1
                        evals_since_improve = 0
                        save_checkpoint(best_path, model, config, optimizer,
                                        epoch, history, checkpoint_id="best")
                    else:
                        evals_since_improve += 1
                        if evals_since_improve >= config.lr_plateau_patience:
                            lr *= config.lr_plateau_factor
                            for group in optimizer.param_groups:
                                group["lr"] = lr
                            evals_since_improve = 0
                            log.info("validation plateau: lr halved to %.2e", lr)
                    if (
                        config.early_stop_recall1 is not None
                        and recall1 >= config.early_stop_recall1
                    ):
                        stop = True

                log_file.write(json.dumps(record) + "\n")

                if config.max_iterations and iteration >= config.max_iterations:
                    stop = True
            if stop:
                break
    finally:
        log_file.close()

    save_checkpoint(last_path, model, config, optimizer, epoch, history,
                    checkpoint_id="last")
    if best_recall < 0:  # no evaluation ever ran; make best an alias of last
        save_checkpoint(best_path, model, config, optimizer, epoch, history,
                        checkpoint_id="best")
        best_recall = float("nan")
    return TrainResult(
        best_path=best_path,
        last_path=last_path,
        best_recall1=best_recall,
        iterations=iteration,
        history=history,
    )
