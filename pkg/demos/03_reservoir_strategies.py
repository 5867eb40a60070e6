"""
Anchor reservoir eviction strategies
====================================

Feeds the same admission sequence to the four buffer strategies and shows
which entropy keys each one retains. Lower keys mean more confident samples.
"""
import numpy as np

from tokadapt import AnchorRecord, Reservoir

rng = np.random.default_rng(3)

###############################################################################
# One class, capacity 3, a stream of ten candidates with varying confidence
# and two "crowded" near-duplicate anchors near the end.

keys = [0.45, 0.30, 0.50, 0.20, 0.60, 0.10, 0.35, 0.15, 0.16, 0.05]
base = rng.normal(size=(4, 8)).astype(np.float32)
stacks = []
for i, k in enumerate(keys):
    stack = rng.normal(size=(4, 8)).astype(np.float32)
    if i in (7, 8):                      # two near-duplicates of candidate 5
        stack = stacks[5] + 0.02 * rng.normal(size=(4, 8)).astype(np.float32)
    stacks.append(stack)

probs = np.array([1.0], np.float32)

for strategy in ("fifo", "uncertainty", "similarity", "diversity"):
    res = Reservoir(num_classes=1, capacity=3, strategy=strategy)
    outcomes = []
    for seq, (k, stack) in enumerate(zip(keys, stacks)):
        out = res.try_admit(0, probs, AnchorRecord(k, stack.copy(), seq))
        outcomes.append("+" if out.admitted else "-")
    kept = sorted((r.entropy_key, r.sample_seq) for r in res.buffers[0])
    print(f"{strategy:12s} admissions {''.join(outcomes)}  "
          f"kept (key, seq): {kept}")

###############################################################################
# fifo keeps whatever arrived last; uncertainty keeps the three lowest keys;
# similarity additionally demands cohesion with the stored set; diversity
# drops the worse member of the most similar pair, so the near-duplicates
# (seq 7 and 8) cannot both stay even though their keys are excellent.
