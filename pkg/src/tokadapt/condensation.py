"""Cross-head token scoring, pruning, and coreset merging.

Each condensation stage splits the live patch tokens three ways by their
cross-head rank score: an untouched top set, a mid-ranked merge band that is
consolidated into a few coreset centers, and a pruned tail. The anchor-
position token never participates.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .encoder import BlockTrace, BlockWeights, EncoderConfig, TokenMatrix
from .errors import InputError


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class StageCounts:
    """Derived token counts for one condensation stage."""
    n_in: int
    n_final: int
    n_pruned: int
    n_after_prune: int
    n_untouched: int
    band: int
    centers: int

    @property
    def is_identity(self) -> bool:
        return self.n_final == self.n_in and self.band == 0 and self.n_pruned == 0


@dataclass(frozen=True)
class CondensationPlan:
    """Keep-rate configuration from which per-stage counts are derived.

    ``merge_prune_ratio`` splits the removed tokens between the merge band
    (merged away into centers) and outright pruning: of ``r`` tokens removed,
    ``round(r / (1 + ratio))`` are pruned and the rest merge into ``centers``
    coreset centers. All rounding is half-up; ``centers`` is clamped per
    stage when fewer tokens survive.
    """
    keep_rate: float
    merge_prune_ratio: float = 2.0
    centers: int = 2

    def __post_init__(self):
        if not (0.0 < self.keep_rate <= 1.0):
            raise InputError("keep_rate must lie in (0, 1]")
        if self.merge_prune_ratio < 0:
            raise InputError("merge_prune_ratio must be nonnegative")
        if self.centers < 0:
            raise InputError("centers must be nonnegative")
        if self.centers == 0 and self.merge_prune_ratio != 0:
            raise InputError("a merge band needs centers; "
                             "use merge_prune_ratio=0 for pure pruning")

    def stage(self, n_in: int) -> StageCounts:
        if n_in < 1:
            raise InputError("stage requires at least one live patch token")
        if self.keep_rate == 1.0:
            return StageCounts(n_in, n_in, 0, n_in, n_in, 0, 0)
        n_final = max(1, round_half_up(self.keep_rate * n_in))
        removed = n_in - n_final
        n_pruned = round_half_up(removed / (1.0 + self.merge_prune_ratio))
        n_after_prune = n_in - n_pruned
        k = min(self.centers, n_final)
        n_untouched = n_final - k
        band = n_after_prune - n_untouched
        # band = (removed - n_pruned) + k, hence always >= k for ratio >= 0
        assert band >= k and n_untouched + k == n_final
        return StageCounts(n_in, n_final, n_pruned, n_after_prune,
                           n_untouched, band, k)


def baseline_scores(trace: BlockTrace) -> np.ndarray:
    """Head-averaged attention probability of the anchor query to each patch."""
    probs = kernels.row_softmax(trace.cls_attn_logits)
    return probs.mean(axis=0, dtype=np.float64).astype(np.float32)


def augmented_scores(tokens_in: TokenMatrix, anchor: Optional[np.ndarray],
                     blk: BlockWeights, cfg: EncoderConfig) -> np.ndarray:
    """Per-head patch logits from the anchor-position query row, optionally
    averaged with a stored domain-anchor query row (H x n).

    The stored anchor joins the key set as well, but its key column never
    enters patch scoring, and ranks are softmax-invariant, so only the two
    query rows matter. Without an anchor this reduces to the plain anchor-
    position row.
    """
    from .encoder import attention_logits  # local to avoid cycle at import

    x = tokens_in.tokens
    xn = kernels.row_layernorm(x, blk.ln1_g, blk.ln1_b)
    if anchor is None:
        queries = xn[:1]
    else:
        anchor_n = kernels.layernorm(anchor, blk.ln1_g, blk.ln1_b)
        queries = np.stack([xn[0], anchor_n])
    logits = attention_logits(xn, queries, blk, cfg)        # (H, q, n + 1)
    patch_logits = logits[:, :, 1:]
    return patch_logits.mean(axis=1, dtype=np.float64).astype(np.float32)


def cross_head_rank(scores: np.ndarray) -> np.ndarray:
    """Average rank position per token across heads; rank 1 = most attended.

    Per head, tokens are ranked by descending logit with ties broken by
    ascending token position, which makes the result invariant under any
    per-head strictly increasing transform.
    """
    scores = np.atleast_2d(scores)
    heads, n = scores.shape
    ranks = np.empty((heads, n), dtype=np.float64)
    positions = np.arange(n)
    for h in range(heads):
        order = np.lexsort((positions, -scores[h].astype(np.float64)))
        ranks[h, order] = positions + 1
    return ranks.mean(axis=0)


@dataclass
class Partition:
    """Disjoint, exhaustive split of live patch indices for one stage."""
    untouched: np.ndarray           # original order (ascending position)
    band: np.ndarray                # ascending rank score (best first)
    pruned: np.ndarray              # ascending position


def partition(rank_scores: np.ndarray, stage: StageCounts) -> Partition:
    n = rank_scores.shape[0]
    if n != stage.n_in:
        raise InputError(f"rank scores cover {n} tokens, stage expects {stage.n_in}")
    order = np.lexsort((np.arange(n), rank_scores))
    untouched = np.sort(order[:stage.n_untouched])
    band = order[stage.n_untouched:stage.n_untouched + stage.band]
    pruned = np.sort(order[stage.n_untouched + stage.band:])
    return Partition(untouched=untouched, band=band, pruned=pruned)


def _cosine_distances(points: np.ndarray) -> np.ndarray:
    """Pairwise chord distance sqrt(2 * (1 - cosine)).

    This is the Euclidean distance between the unit-normalized points, hence
    a true metric: the farthest-first greedy keeps its 2-approximation
    guarantee, which plain 1 - cosine (no triangle inequality) does not
    offer. It is strictly increasing in 1 - cosine, so center choices and
    cluster assignments are identical to ranking by cosine. Zero-norm points
    normalize to the origin.
    """
    x = points.astype(np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    unit = x / np.where(norms > 0, norms, 1.0)
    dist = np.linalg.norm(unit[:, None, :] - unit[None, :, :], axis=2)
    np.fill_diagonal(dist, 0.0)
    return dist


def kcenter_greedy(points: np.ndarray, k: int,
                   seed_priorities: Optional[np.ndarray] = None) -> list:
    """Farthest-first center selection under 1 - cosine distance.

    The seed is the point with the lowest priority (best rank score); each
    following center maximizes the minimum distance to those chosen. Ties
    always resolve to the lowest point index. If ``k`` covers all points,
    every point is a center.
    """
    m = points.shape[0]
    if k < 1:
        raise InputError("kcenter_greedy requires k >= 1")
    if k >= m:
        return list(range(m))
    dist = _cosine_distances(points)
    if seed_priorities is None:
        seed = 0
    else:
        seed = int(np.lexsort((np.arange(m), seed_priorities))[0])
    centers = [seed]
    min_d = dist[seed].copy()
    while len(centers) < k:
        nxt = int(np.argmax(min_d))     # first index on ties
        centers.append(nxt)
        np.minimum(min_d, dist[nxt], out=min_d)
    return centers


def merge_clusters(points: np.ndarray, center_ids: list):
    """Assign each point to its nearest center and average the clusters.

    Returns (merged (k, d) float32, assignment (m,) of center-list indices).
    Centers are ordered by ascending point index so distance ties resolve to
    the lower center id.
    """
    centers = sorted(int(c) for c in center_ids)
    dist = _cosine_distances(points)
    assignment = np.argmin(dist[:, centers], axis=1)
    merged = np.empty((len(centers), points.shape[1]), dtype=np.float32)
    for j in range(len(centers)):
        members = points[assignment == j].astype(np.float64)
        merged[j] = members.mean(axis=0).astype(np.float32)
    return merged, assignment, centers


def condense_tokens(t: TokenMatrix, rank_scores: np.ndarray, stage: StageCounts):
    """Apply one stage to a post-attention token matrix.

    Output token order is [anchor; untouched in original order; merged
    centers]. Returns (TokenMatrix, Partition, assignment) where assignment
    maps band positions (in Partition.band order) to merged-cluster indices,
    or None when the stage merges nothing.
    """
    if stage.is_identity:
        return t, Partition(np.arange(t.num_patches), np.empty(0, int),
                            np.empty(0, int)), None
    if t.num_patches != stage.n_in:
        raise InputError(f"token matrix has {t.num_patches} patches, "
                         f"stage expects {stage.n_in}")
    parts = partition(rank_scores, stage)
    rows = t.tokens[1:]
    new_tokens = [t.tokens[:1], rows[parts.untouched]]
    new_ids = [t.patch_ids[i] for i in parts.untouched]
    assignment = None
    if stage.band:
        band_points = rows[parts.band]
        centers = kcenter_greedy(band_points, stage.centers,
                                 rank_scores[parts.band])
        merged, assignment, centers = merge_clusters(band_points, centers)
        new_tokens.append(merged)
        for j in range(len(centers)):
            members = [t.patch_ids[parts.band[i]]
                       for i in np.flatnonzero(assignment == j)]
            new_ids.append(tuple(sorted(set().union(*members))))
    out = TokenMatrix(np.concatenate(new_tokens, axis=0).astype(np.float32),
                      new_ids)
    assert out.num_patches == stage.n_final
    return out, parts, assignment


def condense(t: TokenMatrix, ctx, anchor: Optional[np.ndarray],
             stage: StageCounts) -> TokenMatrix:
    """Score, rank, and condense a post-attention token matrix in one call.

    ``ctx`` is the encoder's CondenseContext: scoring runs on the block-input
    tokens with the block's own projections, falling back to the plain
    anchor-position row when no stored anchor is available.
    """
    if stage.is_identity:
        return t
    scores = augmented_scores(ctx.tokens_in, anchor, ctx.block, ctx.config)
    out, _, _ = condense_tokens(t, cross_head_rank(scores), stage)
    return out
