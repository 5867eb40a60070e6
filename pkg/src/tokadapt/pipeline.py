"""Sequential online adaptation loop and its accounting.

One engine owns all mutable state (the reservoir); samples are processed
strictly in stream order with batch size one. Per sample: encode with the
condensation hook wired to the reservoir, compute zero-shot probabilities,
apply logits correction, predict, then attempt reservoir admission keyed by
the uncorrected prediction.
"""

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .condensation import (CondensationPlan, StageCounts, augmented_scores,
                           baseline_scores, condense_tokens, cross_head_rank)
from .correction import correct, layer_weights, token_level_probs
from .encoder import (EncoderConfig, EncoderWeights, TokenMatrix, embed,
                      encode, encode_tokens, zero_shot_probs)
from .errors import InputError
from .reservoir import STRATEGIES, AnchorRecord, Reservoir, class_entropy

MODES = ("tca", "baseline-evit", "vanilla")

# mask codes, per original patch index
MASK_KEPT = 0        # untouched at this stage (merged clusters are >= 1)
MASK_PRUNED = -1     # dropped at this stage
MASK_GONE = -2       # already removed by an earlier stage


@dataclass(frozen=True)
class RunConfig:
    mode: str = "tca"
    keep_rate: float = 0.9
    merge_prune_ratio: float = 2.0
    centers: int = 2
    correction_weight: float = 2.0
    layer_temp: float = 0.05
    direction: str = "shallow"
    reservoir_size: int = 3
    strategy: str = "diversity"
    condense_blocks: tuple = (4, 7, 10)
    tau: float = 0.01
    seed: int = 0

    def validate(self, layers: int) -> None:
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        if not (0.0 < self.keep_rate <= 1.0):
            raise InputError("keep rate must lie in (0, 1]")
        if self.tau <= 0:
            raise InputError("tau must be positive")
        if self.mode == "vanilla" or self.keep_rate == 1.0:
            condensing = False
        else:
            condensing = True
        if condensing:
            blocks = tuple(self.condense_blocks)
            if not blocks:
                raise InputError("condensation needs at least one block")
            if list(blocks) != sorted(set(blocks)):
                raise InputError("condense_blocks must be strictly increasing")
            if blocks[0] < 1 or blocks[-1] > layers:
                raise InputError(f"condense_blocks must lie in [1, {layers}]")
            if self.merge_prune_ratio < 0:
                raise InputError("merge:prune ratio must be nonnegative")
            if self.centers < 0:
                raise InputError("centers must be nonnegative")
        if self.mode == "tca":
            if self.correction_weight < 0:
                raise InputError("correction weight must be nonnegative")
            if self.layer_temp <= 0:
                raise InputError("layer temperature must be positive")
            if self.reservoir_size < 1:
                raise InputError("reservoir size must be >= 1")
            if self.strategy not in STRATEGIES:
                raise InputError(f"strategy must be one of {STRATEGIES}")


@dataclass
class StageDetail:
    block_id: int
    counts: StageCounts
    anchor_class: Optional[int]
    mask: list                      # per original patch index


@dataclass
class SampleResult:
    index: int
    pred: int
    base_pred: int
    label: Optional[int]
    probs: list                     # zero-shot probabilities (pre-correction)
    entropy_key: float
    admission: Optional[str]
    evicted_seq: Optional[int]
    stages: list                    # [StageDetail]
    flops: int
    latency_ms: float


def _block_flops(m: int, width: int, hidden: int, attn_tokens: int = None):
    attn_m = m if attn_tokens is None else attn_tokens
    attn = 4 * attn_m * width * width + 2 * attn_m * attn_m * width
    mlp = 2 * m * width * hidden
    return attn, mlp


def flops_walk(cfg: EncoderConfig, transitions: dict, anchor_overhead: bool) -> int:
    """Multiply-accumulate count for one forward pass.

    ``transitions`` maps a condensing block id to (n_in, n_final); attention
    runs at the pre-condensation count, the MLP at the post-condensation
    count. Normalizations and softmaxes are excluded by convention.
    """
    width, hidden = cfg.width, int(round(cfg.mlp_ratio * cfg.width))
    total = cfg.num_patches * width * (3 * cfg.patch_side ** 2)
    n = cfg.num_patches
    for block_id in range(1, cfg.layers + 1):
        m = n + 1
        attn, _ = _block_flops(m, width, hidden)
        total += attn
        if block_id in transitions:
            n_in, n_final = transitions[block_id]
            if n_in != n:
                raise InputError(f"block {block_id}: transition n_in {n_in} != live {n}")
            if anchor_overhead:
                total += 2 * width * n_in
            n = n_final
        total += 2 * (n + 1) * width * hidden
    return total


def flops_estimate(cfg: EncoderConfig, plan: CondensationPlan,
                   anchor_overhead: bool = True) -> int:
    """Analytic estimate for a geometry and keep-rate plan (no data needed)."""
    transitions = {}
    n = cfg.num_patches
    if plan.keep_rate < 1.0:
        for block_id in cfg.condense_blocks:
            st = plan.stage(n)
            transitions[block_id] = (st.n_in, st.n_final)
            n = st.n_final
    return flops_walk(cfg, transitions, anchor_overhead and bool(transitions))


class Engine:
    """Owns the model, text embeddings, reservoir, and run configuration."""

    def __init__(self, cfg: EncoderConfig, weights: EncoderWeights,
                 text_embeddings: np.ndarray, run: RunConfig,
                 classnames: Optional[list] = None):
        run.validate(cfg.layers)
        weights.validate(cfg)
        if text_embeddings.ndim != 2 or text_embeddings.shape[1] != cfg.embed_dim:
            raise InputError(f"text embeddings must be (C, {cfg.embed_dim})")
        norms = np.linalg.norm(text_embeddings.astype(np.float64), axis=1)
        if (norms == 0).any():
            raise InputError("text embeddings contain a zero row")
        self.run_config = run
        self.weights = weights
        self.text = text_embeddings.astype(np.float32)
        self.classnames = classnames
        self.num_classes = text_embeddings.shape[0]

        self._condensing = run.mode != "vanilla" and run.keep_rate < 1.0
        blocks = tuple(run.condense_blocks) if self._condensing else ()
        self.config = EncoderConfig(
            image_side=cfg.image_side, patch_side=cfg.patch_side,
            layers=cfg.layers, heads=cfg.heads, width=cfg.width,
            mlp_ratio=cfg.mlp_ratio, embed_dim=cfg.embed_dim,
            condense_blocks=blocks)
        if run.mode == "baseline-evit":
            self.plan = CondensationPlan(run.keep_rate, 0.0, 0)
        else:
            self.plan = CondensationPlan(run.keep_rate, run.merge_prune_ratio,
                                         run.centers)
        self.reservoir = Reservoir(self.num_classes, run.reservoir_size,
                                   run.strategy)
        self.layer_w = layer_weights(run.layer_temp, cfg.layers, run.direction)
        self.vanilla_flops = flops_walk(self.config, {}, False)
        self._details = []
        self._samples_seen = 0

    # --- condensation hooks ---

    def _hook(self):
        if not self._condensing:
            return None
        if self.run_config.mode == "tca":
            return self._tca_hook
        return self._baseline_hook

    def _apply_stage(self, mid: TokenMatrix, rank, anchor_class, block_id):
        stage = self.plan.stage(mid.num_patches)
        before_ids = list(mid.patch_ids)
        out, parts, assignment = condense_tokens(mid, rank, stage)
        mask = [MASK_GONE] * self.config.num_patches
        for i in parts.untouched:
            for orig in before_ids[i]:
                mask[orig] = MASK_KEPT
        for pos, i in enumerate(parts.band):
            cluster = int(assignment[pos]) + 1 if assignment is not None else 1
            for orig in before_ids[i]:
                mask[orig] = cluster
        for i in parts.pruned:
            for orig in before_ids[i]:
                mask[orig] = MASK_PRUNED
        self._details.append(StageDetail(block_id, stage, anchor_class, mask))
        return out

    def _tca_hook(self, mid, ctx):
        sel = self.reservoir.select_anchor_class(ctx.trace.input_cls, ctx.block_id)
        anchor_class, anchor = (sel if sel else (None, None))
        scores = augmented_scores(ctx.tokens_in, anchor, ctx.block, ctx.config)
        ctx.trace.aug_attn_logits = scores
        return self._apply_stage(mid, cross_head_rank(scores), anchor_class,
                                 ctx.block_id)

    def _baseline_hook(self, mid, ctx):
        rank = cross_head_rank(baseline_scores(ctx.trace)[None, :])
        return self._apply_stage(mid, rank, None, ctx.block_id)

    # --- per-sample processing ---

    def process_sample(self, pixels: np.ndarray,
                       label: Optional[int] = None) -> SampleResult:
        t0 = time.perf_counter()
        self._details = []
        result = encode(pixels, self.config, self.weights, self._hook())
        p = zero_shot_probs(result.z, self.text, self.run_config.tau)
        if self.run_config.mode == "tca":
            p_token = token_level_probs(result.anchor_stack, self.reservoir,
                                        self.layer_w)
            lam = self.run_config.correction_weight
        else:
            p_token = np.zeros(self.num_classes)
            lam = 0.0
        corrected = correct(p, p_token, lam)
        pred = int(np.argmax(corrected))
        base_pred = int(np.argmax(p))
        entropy_key = class_entropy(float(p[base_pred]))

        admission = evicted = None
        if self.run_config.mode == "tca":
            record = AnchorRecord(entropy_key, result.anchor_stack.copy(),
                                  self._samples_seen)
            outcome = self.reservoir.try_admit(base_pred, p, record)
            admission, evicted = outcome.status, outcome.evicted_seq

        transitions = {d.block_id: (d.counts.n_in, d.counts.n_final)
                       for d in self._details}
        flops = flops_walk(self.config, transitions,
                           self.run_config.mode == "tca" and bool(transitions))
        out = SampleResult(
            index=self._samples_seen, pred=pred, base_pred=base_pred,
            label=label, probs=[float(x) for x in p],
            entropy_key=entropy_key, admission=admission,
            evicted_seq=evicted, stages=list(self._details), flops=flops,
            latency_ms=(time.perf_counter() - t0) * 1e3)
        self._samples_seen += 1
        return out

    def run_stream(self, samples):
        """Process (pixels, label) pairs in order; returns (summary, results).

        The summary is JSON-ready; per-sample timing is deliberately kept out
        of it so reruns of the same stream are byte-identical.
        """
        results = []
        alignment_trace = {}
        for pixels, label in samples:
            res = self.process_sample(pixels, label)
            results.append(res)
            if self.run_config.mode == "tca":
                for c, value in self.reservoir.alignment(
                        self.text, self.weights.ln_post_g,
                        self.weights.ln_post_b, self.weights.proj).items():
                    alignment_trace.setdefault(str(c), []).append(
                        [res.index, value])
        labeled = [r for r in results if r.label is not None]
        summary = {
            "mode": self.run_config.mode,
            "samples": len(results),
            "flops_total": int(sum(r.flops for r in results)),
            "flops_mean": (float(np.mean([r.flops for r in results]))
                           if results else 0.0),
            "flops_ratio": (float(np.mean([r.flops for r in results]))
                            / self.vanilla_flops if results else 1.0),
            "admitted_per_class": self._admitted_counts(results),
            "alignment_trace": alignment_trace,
            "config": asdict(self.run_config) | {
                "condense_blocks": list(self.run_config.condense_blocks)},
        }
        if labeled:
            summary["accuracy"] = (sum(r.pred == r.label for r in labeled)
                                   / len(labeled))
        return summary, results

    def _admitted_counts(self, results):
        counts = [0] * self.num_classes
        for r in results:
            if r.admission == "admitted":
                counts[r.base_pred] += 1
        return counts

    # --- diagnostics ---

    def leave_one_out(self, pixels: np.ndarray,
                      label: Optional[int] = None) -> np.ndarray:
        """Change in cosine alignment to the reference class when one patch
        is withheld from the whole forward pass (no condensation)."""
        from .kernels import cosine

        plain = EncoderConfig(
            image_side=self.config.image_side, patch_side=self.config.patch_side,
            layers=self.config.layers, heads=self.config.heads,
            width=self.config.width, mlp_ratio=self.config.mlp_ratio,
            embed_dim=self.config.embed_dim, condense_blocks=())
        base = encode(pixels, plain, self.weights)
        p = zero_shot_probs(base.z, self.text, self.run_config.tau)
        c = label if label is not None else int(np.argmax(p))
        ref = cosine(base.z, self.text[c])
        full = embed(pixels, plain, self.weights)
        deltas = np.empty(plain.num_patches, dtype=np.float64)
        for i in range(plain.num_patches):
            tokens = np.delete(full.tokens, i + 1, axis=0)
            ids = [pid for j, pid in enumerate(full.patch_ids) if j != i]
            res = encode_tokens(TokenMatrix(tokens, ids), plain, self.weights)
            deltas[i] = cosine(res.z, self.text[c]) - ref
        return deltas
