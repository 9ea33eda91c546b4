"""Independent reference implementations used as test oracles.

Everything here is deliberately written as plain scalar loops (or brute
force) so it shares no code path with the package implementations it
checks.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# events


def slice_linear_scan(t, lo, hi):
    """Indices of events with lo <= t < hi, by linear scan."""
    return [i for i, ti in enumerate(t) if lo <= ti < hi]


def count_events_per_polarity(p):
    neg = sum(1 for v in p if v == -1)
    pos = sum(1 for v in p if v == +1)
    return neg, pos


def area_resample_supersample(image, out_w, out_h):
    """Area-redistribution resampling via an exact common-refinement grid."""
    in_h, in_w = image.shape
    gh = math.lcm(in_h, out_h)
    gw = math.lcm(in_w, out_w)
    fine = np.repeat(np.repeat(image, gh // in_h, axis=0), gw // in_w, axis=1)
    fine = fine / ((gh // in_h) * (gw // in_w))  # spread each cell's mass evenly
    out = np.zeros((out_h, out_w))
    bh, bw = gh // out_h, gw // out_w
    for i in range(out_h):
        for j in range(out_w):
            out[i, j] = fine[i * bh:(i + 1) * bh, j * bw:(j + 1) * bw].sum()
    return out


# ---------------------------------------------------------------------------
# geometry


def haversine_law_of_cosines(lat1, lon1, lat2, lon2, radius):
    """Great-circle distance via the spherical law of cosines."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.acos(max(-1.0, min(1.0, c)))


# ---------------------------------------------------------------------------
# attention (scalar loops)


def channel_attention_reference(x, fc1_w, fc1_b, fc2_w, fc2_b):
    c, h, w = x.shape
    avg = np.array([x[ci].mean() for ci in range(c)])
    mx = np.array([x[ci].max() for ci in range(c)])

    def mlp(v):
        hidden = fc1_w @ v + fc1_b
        hidden = np.maximum(hidden, 0.0)
        return fc2_w @ hidden + fc2_b

    gate = 1.0 / (1.0 + np.exp(-(mlp(avg) + mlp(mx))))
    out = np.empty_like(x)
    for ci in range(c):
        out[ci] = x[ci] * gate[ci]
    return out


def spatial_attention_reference(x, conv_w, conv_b):
    """conv_w: (1, 2, k, k); gating by a kxk conv over [channel mean; channel max]."""
    c, h, w = x.shape
    k = conv_w.shape[-1]
    pad = k // 2
    mean_map = x.mean(axis=0)
    max_map = x.max(axis=0)
    stacked = np.stack([mean_map, max_map])
    padded = np.zeros((2, h + 2 * pad, w + 2 * pad))
    padded[:, pad:pad + h, pad:pad + w] = stacked
    gate = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            acc = conv_b[0]
            for ci in range(2):
                for di in range(k):
                    for dj in range(k):
                        acc += conv_w[0, ci, di, dj] * padded[ci, i + di, j + dj]
            gate[i, j] = 1.0 / (1.0 + math.exp(-acc))
    return x * gate[None, :, :]


def attention_reference(x, params):
    """Full channel-then-spatial attention; params maps names to arrays."""
    y = channel_attention_reference(
        x, params["fc1_w"], params["fc1_b"], params["fc2_w"], params["fc2_b"]
    )
    return spatial_attention_reference(y, params["conv_w"], params["conv_b"])


# ---------------------------------------------------------------------------
# VLAD (scalar loops)


def vlad_reference(features, centers, assign_w, assign_b, intra_norm=True):
    """features: (S, C); centers/assign_w: (K, C); returns flat (K*C,)."""
    s_count, c_count = features.shape
    k_count = centers.shape[0]
    scores = np.empty((s_count, k_count))
    for s in range(s_count):
        for k in range(k_count):
            scores[s, k] = float(np.dot(assign_w[k], features[s])) + assign_b[k]
    assign = np.empty_like(scores)
    for s in range(s_count):
        e = np.exp(scores[s] - scores[s].max())
        assign[s] = e / e.sum()
    vlad = np.zeros((k_count, c_count))
    for k in range(k_count):
        for s in range(s_count):
            vlad[k] += assign[s, k] * (features[s] - centers[k])
    if intra_norm:
        for k in range(k_count):
            norm = math.sqrt(float((vlad[k] ** 2).sum()))
            if norm > 1e-12:
                vlad[k] /= norm
    flat = vlad.reshape(-1)
    total = math.sqrt(float((flat ** 2).sum()))
    return flat / total if total > 1e-12 else flat


# ---------------------------------------------------------------------------
# descriptor re-weighting (scalar loops)


def global_stats_reference(d):
    rows, n = d.shape
    avg = np.array([sum(d[i]) / n for i in range(rows)])
    mx = np.array([max(d[i]) for i in range(rows)])
    return avg, mx


def drw_weights_reference(g_avg, g_max, params, max_stats_both=False):
    def stack(v, w1, b1, w2, b2):
        hidden = np.maximum(w1 @ v + b1, 0.0)
        return w2 @ hidden + b2

    first = g_max if max_stats_both else g_avg
    raw = stack(first, params["avg_fc1_w"], params["avg_fc1_b"],
                params["avg_fc2_w"], params["avg_fc2_b"])
    raw = raw + stack(g_max, params["max_fc1_w"], params["max_fc1_b"],
                      params["max_fc2_w"], params["max_fc2_b"])
    e = np.exp(raw - raw.max())
    return e / e.sum()


def reweight_reference(d, w):
    rows, n = d.shape
    out = np.zeros(n)
    for i in range(rows):
        for j in range(n):
            out[j] += w[i] * d[i, j]
    return out


# ---------------------------------------------------------------------------
# triplet loss


def triplet_loss_reference(query, positives, negatives, margin):
    best = min(sum((q - p) ** 2 for q, p in zip(query, pos)) for pos in positives)
    loss = 0.0
    for neg in negatives:
        d2 = sum((q - n) ** 2 for q, n in zip(query, neg))
        loss += max(0.0, best - d2 + margin)
    return loss


# ---------------------------------------------------------------------------
# retrieval metrics (brute force)


def recall_reference(dist, geo, phi, n):
    """Full row sort; a query succeeds if any of its top-n is within phi."""
    n_q, n_db = dist.shape
    n = min(n, n_db)
    hits = 0
    for qi in range(n_q):
        order = sorted(range(n_db), key=lambda j: (dist[qi, j], j))
        if any(geo[qi, j] <= phi for j in order[:n]):
            hits += 1
    return hits / n_q


def success_flags_reference(dist, geo, phi):
    flags = []
    for qi in range(dist.shape[0]):
        order = sorted(range(dist.shape[1]), key=lambda j: (dist[qi, j], j))
        flags.append(geo[qi, order[0]] <= phi)
    return flags


def pr_reference(dist, geo, phi, thresholds):
    """Independent confusion-matrix computation at each given threshold."""
    n_q, n_db = dist.shape
    nearest = []
    for qi in range(n_q):
        order = sorted(range(n_db), key=lambda j: (dist[qi, j], j))
        nearest.append(order[0])
    precision, recall = [], []
    for tau in thresholds:
        tp = fp = fn = 0
        for qi in range(n_q):
            score = dist[qi, nearest[qi]]
            correct = geo[qi, nearest[qi]] <= phi
            has_gt = any(geo[qi, j] <= phi for j in range(n_db))
            if score <= tau:
                if correct:
                    tp += 1
                else:
                    fp += 1
            elif has_gt:
                fn += 1
        precision.append(tp / (tp + fp) if tp + fp else 1.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    return np.array(precision), np.array(recall)


def f1_max_reference(precision, recall):
    best = 0.0
    for p, r in zip(precision, recall):
        if p + r > 0:
            best = max(best, 2 * p * r / (p + r))
    return best


# ---------------------------------------------------------------------------
# gradients


def finite_difference_gradient(f, x, eps=1e-6):
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += eps
        lo.flat[i] -= eps
        grad.flat[i] = (f(hi) - f(lo)) / (2 * eps)
    return grad


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(1e-8, float(np.abs(a).max()), float(np.abs(b).max()))
    return float(np.abs(a - b).max()) / denom
