"""
The online adaptation loop end to end
=====================================

Streams images through the engine in the three modes (vanilla zero-shot,
attention-based pruning, full adaptation), then looks at the per-sample
records: reservoir admissions, per-stage token counts, compute ratio, and
the anchor-to-text alignment trace.
"""
import numpy as np

from tokadapt import Engine, RunConfig
from tokadapt.encoder import BlockWeights, EncoderConfig, EncoderWeights

rng = np.random.default_rng(11)

###############################################################################
# Toy model plus a 3-class stream of noisy class prototypes.

cfg = EncoderConfig(image_side=32, patch_side=8, layers=4, heads=4,
                    width=64, mlp_ratio=4.0, embed_dim=32)
dv, hidden, pdim = cfg.width, int(cfg.mlp_ratio * cfg.width), 3 * cfg.patch_side ** 2


def block():
    return BlockWeights(
        ln1_g=np.ones(dv, np.float32), ln1_b=np.zeros(dv, np.float32),
        wq=rng.normal(0, dv ** -0.5, (dv, dv)).astype(np.float32),
        wk=rng.normal(0, dv ** -0.5, (dv, dv)).astype(np.float32),
        wv=rng.normal(0, dv ** -0.5, (dv, dv)).astype(np.float32),
        wo=rng.normal(0, dv ** -0.5, (dv, dv)).astype(np.float32),
        ln2_g=np.ones(dv, np.float32), ln2_b=np.zeros(dv, np.float32),
        mlp_in_w=rng.normal(0, dv ** -0.5, (dv, hidden)).astype(np.float32),
        mlp_in_b=np.zeros(hidden, np.float32),
        mlp_out_w=rng.normal(0, hidden ** -0.5, (hidden, dv)).astype(np.float32),
        mlp_out_b=np.zeros(dv, np.float32))


weights = EncoderWeights(
    patch_embed=rng.normal(0, pdim ** -0.5, (dv, pdim)).astype(np.float32),
    pos_embed=rng.normal(0, 0.1, (cfg.num_patches + 1, dv)).astype(np.float32),
    cls_init=rng.normal(0, 1, dv).astype(np.float32),
    blocks=[block() for _ in range(cfg.layers)],
    ln_post_g=np.ones(dv, np.float32), ln_post_b=np.zeros(dv, np.float32),
    proj=rng.normal(0, dv ** -0.5, (cfg.embed_dim, dv)).astype(np.float32))

text = rng.normal(0, 1, (3, cfg.embed_dim))
text /= np.linalg.norm(text, axis=1, keepdims=True)
text = text.astype(np.float32)

prototypes = [rng.normal(0, 1, (3, 32, 32)).astype(np.float32) for _ in range(3)]
stream = []
for t in range(120):
    label = t % 3
    noisy = prototypes[label] + rng.normal(0, 0.35, (3, 32, 32)).astype(np.float32)
    stream.append((noisy.astype(np.float32), label))

###############################################################################
# Run the three modes over the identical stream.

for mode in ("vanilla", "baseline-evit", "tca"):
    engine = Engine(cfg, weights, text, RunConfig(
        mode=mode, keep_rate=0.9, condense_blocks=(2, 3)))
    summary, results = engine.run_stream(stream)
    print(f"{mode:14s} accuracy {summary['accuracy']:.3f}  "
          f"flops ratio {summary['flops_ratio']:.3f}  "
          f"admitted {summary['admitted_per_class']}")

###############################################################################
# A closer look at the adaptive run: stage counts and the alignment trace.

engine = Engine(cfg, weights, text, RunConfig(mode="tca", keep_rate=0.9,
                                              condense_blocks=(2, 3)))
summary, results = engine.run_stream(stream)
sample = results[-1]
print("\nlast sample:", f"pred {sample.pred}, label {sample.label},",
      f"entropy key {sample.entropy_key:.2e}, admission {sample.admission}")
for d in sample.stages:
    print(f"  block {d.block_id}: {d.counts.n_in} -> {d.counts.n_final} "
          f"(band {d.counts.band}, anchor class {d.anchor_class})")

trace = summary["alignment_trace"]
for c, series in sorted(trace.items()):
    vals = [v for _, v in series]
    print(f"class {c} anchor-to-text alignment: "
          f"{vals[0]:+.3f} (first) -> {vals[-1]:+.3f} (last)")

###############################################################################
# Leave-one-out influence: how much each patch moves the embedding toward
# the predicted class when it is the only one withheld.

deltas = engine.leave_one_out(stream[0][0])
grid = deltas.reshape(4, 4)
print("\nper-patch leave-one-out influence (4x4 grid):")
print(np.round(grid, 4))
print("most helpful patch:", int(np.argmin(deltas)),
      "| most misleading patch:", int(np.argmax(deltas)))
