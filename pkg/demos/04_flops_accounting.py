"""
Compute accounting across keep rates
====================================

The analytic multiply-accumulate model for a ViT-B/16 tower with three
condensation stages, swept over keep rates. Attention runs at the
pre-condensation token count, the MLP at the post-condensation count.
"""
from tokadapt import CondensationPlan, flops_estimate
from tokadapt.encoder import EncoderConfig

cfg = EncoderConfig(image_side=224, patch_side=16, layers=12, heads=12,
                    width=768, mlp_ratio=4.0, embed_dim=512,
                    condense_blocks=(4, 7, 10))

vanilla = flops_estimate(cfg, CondensationPlan(1.0))
print(f"{'keep rate':>10} | {'GFLOPs':>8} | {'ratio':>7} | {'saved':>7}")
print("-" * 42)
for rate in (1.0, 0.95, 0.9, 0.8, 0.7, 0.6):
    total = flops_estimate(cfg, CondensationPlan(rate, 2.0, 2))
    print(f"{rate:>10.2f} | {total / 1e9:>8.2f} | {total / vanilla:>7.4f} "
          f"| {1 - total / vanilla:>6.1%}")

###############################################################################
# Token counts behind the keep-rate 0.9 row: each stage keeps round(0.9 * n).

plan = CondensationPlan(0.9, 2.0, 2)
n = cfg.num_patches
chain = [n]
for _ in cfg.condense_blocks:
    n = plan.stage(n).n_final
    chain.append(n)
print("\npatch counts through the stages at keep rate 0.9:",
      " -> ".join(str(c) for c in chain))
