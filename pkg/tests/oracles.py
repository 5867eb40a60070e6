"""Independent brute-force reference implementations used as test oracles.

Everything here is written with explicit loops / exhaustive enumeration in
float64, deliberately avoiding the library's code paths.
"""

import math
from itertools import combinations

import numpy as np


# --- naive transformer block ------------------------------------------------

def _ln_rows(x, g, b, eps=1e-5):
    out = np.empty_like(x, dtype=np.float64)
    for i in range(x.shape[0]):
        row = x[i].astype(np.float64)
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / math.sqrt(var + eps) * g + b
    return out


def naive_block(x, blk, heads):
    """One pre-norm block, explicit per-head loops, float64 throughout."""
    m, dv = x.shape
    dh = dv // heads
    xn = _ln_rows(x, blk.ln1_g.astype(np.float64), blk.ln1_b.astype(np.float64))
    q = xn @ blk.wq.astype(np.float64)
    k = xn @ blk.wk.astype(np.float64)
    v = xn @ blk.wv.astype(np.float64)
    ctx = np.zeros((m, dv))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(m):
            logits = [float(q[i, sl] @ k[j, sl]) / math.sqrt(dh) for j in range(m)]
            mx = max(logits)
            ex = [math.exp(l - mx) for l in logits]
            z = sum(ex)
            for j in range(m):
                ctx[i, sl] += (ex[j] / z) * v[j, sl]
    x1 = x.astype(np.float64) + ctx @ blk.wo.astype(np.float64)
    xn2 = _ln_rows(x1, blk.ln2_g.astype(np.float64), blk.ln2_b.astype(np.float64))
    hidden = xn2 @ blk.mlp_in_w.astype(np.float64) + blk.mlp_in_b.astype(np.float64)
    act = np.vectorize(lambda t: t * 0.5 * (1.0 + math.erf(t / math.sqrt(2.0))))(hidden)
    x2 = x1 + act @ blk.mlp_out_w.astype(np.float64) + blk.mlp_out_b.astype(np.float64)
    return x2


def naive_cls_logits(x, blk, heads):
    """Pre-softmax logits of the row-0 query against patch keys, per head."""
    m, dv = x.shape
    dh = dv // heads
    xn = _ln_rows(x, blk.ln1_g.astype(np.float64), blk.ln1_b.astype(np.float64))
    q = xn @ blk.wq.astype(np.float64)
    k = xn @ blk.wk.astype(np.float64)
    out = np.empty((heads, m - 1))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for j in range(1, m):
            out[h, j - 1] = float(q[0, sl] @ k[j, sl]) / math.sqrt(dh)
    return out


# --- reservoir replay -------------------------------------------------------

def _cos(a, b):
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def replay_reservoir(events, capacity, strategy, num_classes):
    """Replay admissions from scratch; each event is
    (class_id, argmax_class, entropy_key, final_anchor, seq).

    Buffers hold (entropy_key, seq, final_anchor) tuples in admission order.
    """
    buffers = [[] for _ in range(num_classes)]
    for class_id, argmax_class, key, anchor, seq in events:
        if argmax_class != class_id:
            continue
        buf = buffers[class_id]
        if len(buf) < capacity:
            buf.append((key, seq, anchor))
            continue
        if strategy == "fifo":
            oldest = sorted(buf, key=lambda r: r[1])[0]
            buf.remove(oldest)
            buf.append((key, seq, anchor))
        elif strategy == "uncertainty":
            worst = sorted(buf, key=lambda r: (r[0], r[1]))[-1]
            if key < worst[0]:
                buf.remove(worst)
                buf.append((key, seq, anchor))
        elif strategy == "similarity":
            sims = [_cos(anchor, r[2]) for r in buf]
            pairs = [_cos(r1[2], r2[2]) for r1, r2 in combinations(buf, 2)]
            bar = sum(pairs) / len(pairs) if pairs else -1.0
            worst = sorted(buf, key=lambda r: (r[0], r[1]))[-1]
            if sum(sims) / len(sims) >= bar and key < worst[0]:
                buf.remove(worst)
                buf.append((key, seq, anchor))
        elif strategy == "diversity":
            pool = buf + [(key, seq, anchor)]
            best_pair, best_sim = None, -math.inf
            for i, j in combinations(range(len(pool)), 2):
                s = _cos(pool[i][2], pool[j][2])
                if s > best_sim:
                    best_sim, best_pair = s, (i, j)
            i, j = best_pair
            drop = max(pool[i], pool[j], key=lambda r: (r[0], r[1]))
            if drop[1] != seq:
                buf.remove(drop)
                buf.append((key, seq, anchor))
        else:
            raise ValueError(strategy)
    return buffers


# --- exhaustive K-center optimum ---------------------------------------------

def cosine_dist_matrix(points):
    """Chord distance (Euclidean between unit-normalized points), computed
    pair by pair with explicit loops."""
    m = points.shape[0]
    x = points.astype(np.float64)
    unit = []
    for i in range(m):
        n = math.sqrt(float(x[i] @ x[i]))
        unit.append(x[i] / n if n > 0 else x[i] * 0.0)
    d = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            diff = unit[i] - unit[j]
            d[i, j] = d[j, i] = math.sqrt(float(diff @ diff))
    return d


def kcenter_radius(dist, centers):
    return float(dist[:, list(centers)].min(axis=1).max())


def kcenter_optimal_radius(points, k):
    dist = cosine_dist_matrix(points)
    return min(kcenter_radius(dist, sub)
               for sub in combinations(range(points.shape[0]), k))
