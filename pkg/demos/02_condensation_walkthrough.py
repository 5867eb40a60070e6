"""
Token condensation, step by step
================================

Shows how one condensation stage splits live patch tokens into an untouched
top set, a merge band consolidated by farthest-first coreset selection, and
a pruned tail - all driven by cross-head rank scores.
"""
import numpy as np

from tokadapt import (CondensationPlan, TokenMatrix, condense_tokens,
                      cross_head_rank, kcenter_greedy, merge_clusters,
                      partition)

rng = np.random.default_rng(7)

###############################################################################
# Per-stage counts. A keep rate of 0.9 with a 2:1 merge:prune split and 2
# coreset centers, applied to a ViT-B/16-sized token set:

plan = CondensationPlan(keep_rate=0.9, merge_prune_ratio=2.0, centers=2)
n = 196
for stage_idx in range(3):
    st = plan.stage(n)
    print(f"stage {stage_idx + 1}: {st.n_in} -> {st.n_final} patches "
          f"(prune {st.n_pruned}, band {st.band} -> {st.centers} centers)")
    n = st.n_final

###############################################################################
# Cross-head rank scores. Each head ranks tokens by attention logit; the
# final score is the mean rank, so one outlier head cannot dominate:

logits = np.array([[0.5, 0.3, 0.2],     # head 1 prefers token 0
                   [0.1, 0.2, 0.7]])    # head 2 prefers token 2
print("\nper-head logits:\n", logits)
print("mean ranks:", cross_head_rank(logits), "(all tied - no outlier wins)")

###############################################################################
# A full stage on 12 random tokens: partition, then merge the band.

n = 12
stage = CondensationPlan(0.5, 2.0, 2).stage(n)
scores = rng.normal(size=(4, n))                 # 4 heads
ranks = cross_head_rank(scores)
parts = partition(ranks, stage)
print(f"\nuntouched: {parts.untouched.tolist()}")
print(f"merge band: {parts.band.tolist()} (best rank first)")
print(f"pruned:    {parts.pruned.tolist()}")

tokens = TokenMatrix(rng.normal(size=(n + 1, 16)).astype(np.float32),
                     [(i,) for i in range(n)])
band_points = tokens.tokens[1:][parts.band]
centers = kcenter_greedy(band_points, stage.centers, ranks[parts.band])
merged, assignment, center_order = merge_clusters(band_points, centers)
print(f"coreset centers (band positions): {center_order}")
print(f"cluster assignment: {assignment.tolist()}")

out, _, _ = condense_tokens(tokens, ranks, stage)
print(f"\ncondensed: {tokens.num_patches} -> {out.num_patches} patches")
print("merged token id groups:", out.patch_ids[stage.n_untouched:])
