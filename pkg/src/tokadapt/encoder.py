"""Pre-norm ViT visual encoder with an anchor-position token.

The block layout follows the CLIP visual tower: LN -> multi-head
self-attention -> residual -> [condensation hook] -> LN -> MLP -> residual.
The hook, when installed on a block, maps the post-attention token matrix to
a reduced one before the MLP sub-layer; per-block attention traces are
captured so scoring logic can run outside the encoder.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .archive import TensorArchive
from .errors import ContractError, InputError, ShapeError

LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    image_side: int
    patch_side: int
    layers: int
    heads: int
    width: int                      # token dimension D_v
    mlp_ratio: float
    embed_dim: int                  # projected output dimension D
    condense_blocks: tuple = ()     # 1-indexed block ids carrying the hook

    def __post_init__(self):
        if self.image_side % self.patch_side:
            raise InputError("image_side must be divisible by patch_side")
        if self.width % self.heads:
            raise InputError("width must be divisible by heads")
        blocks = tuple(self.condense_blocks)
        if list(blocks) != sorted(set(blocks)):
            raise InputError("condense_blocks must be strictly increasing")
        if blocks and not (1 <= blocks[0] and blocks[-1] <= self.layers):
            raise InputError(f"condense_blocks must lie in [1, {self.layers}]")
        object.__setattr__(self, "condense_blocks", blocks)

    @property
    def grid(self) -> int:
        return self.image_side // self.patch_side

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def head_dim(self) -> int:
        return self.width // self.heads


@dataclass
class BlockWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray                  # (D_v, D_v), right-multiplied: Q = X @ wq
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    mlp_in_w: np.ndarray            # (D_v, hidden)
    mlp_in_b: np.ndarray
    mlp_out_w: np.ndarray           # (hidden, D_v)
    mlp_out_b: np.ndarray


@dataclass
class EncoderWeights:
    patch_embed: np.ndarray         # (D_v, 3 * patch_side^2)
    pos_embed: np.ndarray           # (N + 1, D_v), row 0 = anchor position
    cls_init: np.ndarray            # (D_v,)
    blocks: list                    # [BlockWeights] * layers
    ln_post_g: np.ndarray
    ln_post_b: np.ndarray
    proj: np.ndarray                # (D, D_v): z = proj @ ln_post(cls)

    def validate(self, cfg: EncoderConfig) -> None:
        dv, n = cfg.width, cfg.num_patches
        hidden = int(cfg.mlp_ratio * dv)
        expect = {
            "patch_embed": (dv, 3 * cfg.patch_side ** 2),
            "pos_embed": (n + 1, dv),
            "cls_init": (dv,),
            "ln_post_g": (dv,),
            "ln_post_b": (dv,),
            "proj": (cfg.embed_dim, dv),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise InputError(f"{name}: expected shape {shape}, got {arr.shape}")
        if len(self.blocks) != cfg.layers:
            raise InputError(f"expected {cfg.layers} blocks, got {len(self.blocks)}")
        for i, blk in enumerate(self.blocks):
            for name, shape in [("ln1_g", (dv,)), ("ln1_b", (dv,)),
                                ("wq", (dv, dv)), ("wk", (dv, dv)),
                                ("wv", (dv, dv)), ("wo", (dv, dv)),
                                ("ln2_g", (dv,)), ("ln2_b", (dv,)),
                                ("mlp_in_w", (dv, hidden)), ("mlp_in_b", (hidden,)),
                                ("mlp_out_w", (hidden, dv)), ("mlp_out_b", (dv,))]:
                arr = getattr(blk, name)
                if arr.shape != shape:
                    raise InputError(f"block {i} {name}: expected {shape}, got {arr.shape}")
        for arr in _iter_arrays(self):
            if not np.isfinite(arr).all():
                raise InputError("encoder weights contain non-finite values")


def _iter_arrays(w: EncoderWeights):
    yield from (w.patch_embed, w.pos_embed, w.cls_init,
                w.ln_post_g, w.ln_post_b, w.proj)
    for blk in w.blocks:
        yield from vars(blk).values()


@dataclass
class TokenMatrix:
    """Live tokens: row 0 is the anchor-position token, rows 1.. are patches.

    ``patch_ids[i]`` holds the original patch indices carried by patch token
    ``i`` (a merged token carries the union of its members' ids).
    """
    tokens: np.ndarray              # (n + 1, D_v) float32
    patch_ids: list                 # n tuples of ints

    @property
    def num_patches(self) -> int:
        return self.tokens.shape[0] - 1


@dataclass
class BlockTrace:
    """Attention evidence captured from one block."""
    cls_attn_logits: np.ndarray            # (H, n) pre-softmax, anchor query row
    input_cls: np.ndarray                  # block-input anchor token (D_v,)
    out_cls: Optional[np.ndarray] = None   # block-output anchor token (D_v,)
    aug_attn_logits: Optional[np.ndarray] = None  # (H, n) anchor-augmented rows


@dataclass
class CondenseContext:
    """Everything a condensation hook may need besides the live tokens."""
    block_id: int                   # 1-indexed
    tokens_in: TokenMatrix          # block input (pre-LN, pre-attention)
    trace: BlockTrace
    block: BlockWeights
    config: EncoderConfig


Hook = Callable[[TokenMatrix, CondenseContext], TokenMatrix]


@dataclass
class EncodeResult:
    z: np.ndarray                   # (D,) projected image embedding
    anchor_stack: np.ndarray        # (L, D_v): block outputs of the anchor token
    traces: list                    # [BlockTrace] * L


def embed(pixels: np.ndarray, cfg: EncoderConfig, w: EncoderWeights) -> TokenMatrix:
    """Patchify, project, prepend the anchor token, add positions."""
    side = cfg.image_side
    if pixels.shape != (3, side, side):
        raise InputError(f"expected pixels (3, {side}, {side}), got {pixels.shape}")
    if not np.isfinite(pixels).all():
        raise InputError("pixel tensor contains non-finite values")
    p, g = cfg.patch_side, cfg.grid
    # row-major patch grid; each patch flattened channel-first
    patches = (pixels.reshape(3, g, p, g, p)
                     .transpose(1, 3, 0, 2, 4)
                     .reshape(cfg.num_patches, 3 * p * p)
                     .astype(np.float32))
    tok = kernels.matmul(patches, np.ascontiguousarray(w.patch_embed.T))
    tokens = np.concatenate([w.cls_init[None, :], tok], axis=0)
    tokens = (tokens + w.pos_embed).astype(np.float32)
    return TokenMatrix(tokens, [(i,) for i in range(cfg.num_patches)])


def attention_logits(tokens_norm: np.ndarray, queries_norm: np.ndarray,
                     blk: BlockWeights, cfg: EncoderConfig) -> np.ndarray:
    """Per-head scaled dot-product logits (H, q, keys) for normalized inputs."""
    dh = cfg.head_dim
    q_all = kernels.matmul(queries_norm, blk.wq)
    k_all = kernels.matmul(tokens_norm, blk.wk)
    out = np.empty((cfg.heads, queries_norm.shape[0], tokens_norm.shape[0]),
                   dtype=np.float32)
    for h in range(cfg.heads):
        sl = slice(h * dh, (h + 1) * dh)
        out[h] = kernels.matmul(q_all[:, sl], k_all[:, sl].T) / np.float32(np.sqrt(dh))
    return out


def _check_hook_result(before: TokenMatrix, after: TokenMatrix, cfg: EncoderConfig):
    if not isinstance(after, TokenMatrix):
        raise ContractError("hook must return a TokenMatrix")
    if after.tokens.ndim != 2 or after.tokens.shape[1] != cfg.width:
        raise ContractError(f"hook returned token width {after.tokens.shape}, "
                            f"expected (*, {cfg.width})")
    if after.num_patches < 1:
        raise ContractError("hook removed every patch token")
    if len(after.patch_ids) != after.num_patches:
        raise ContractError("hook returned inconsistent patch_ids")
    if not np.array_equal(after.tokens[0], before.tokens[0]):
        raise ContractError("hook must not alter the anchor-position token")
    if not np.isfinite(after.tokens).all():
        raise ContractError("hook returned non-finite tokens")


def forward_block(t: TokenMatrix, block_id: int, cfg: EncoderConfig,
                  w: EncoderWeights, hook: Optional[Hook] = None):
    """One transformer block; returns (TokenMatrix, BlockTrace).

    The hook, if any, runs between the attention residual and the MLP, only
    when ``block_id`` is one of ``cfg.condense_blocks``.
    """
    blk = w.blocks[block_id - 1]
    x = t.tokens
    if x.shape[1] != cfg.width:
        raise ShapeError(f"token width {x.shape[1]} != config width {cfg.width}")

    xn = kernels.row_layernorm(x, blk.ln1_g, blk.ln1_b, LN_EPS)
    logits = attention_logits(xn, xn, blk, cfg)            # (H, m, m)
    dh = cfg.head_dim
    v_all = kernels.matmul(xn, blk.wv)
    ctx = np.empty_like(xn)
    for h in range(cfg.heads):
        sl = slice(h * dh, (h + 1) * dh)
        attn = kernels.row_softmax(logits[h])
        ctx[:, sl] = kernels.matmul(attn, v_all[:, sl])
    attn_out = kernels.matmul(ctx, blk.wo)
    x1 = (x + attn_out).astype(np.float32)

    trace = BlockTrace(cls_attn_logits=np.ascontiguousarray(logits[:, 0, 1:]),
                       input_cls=x[0].copy())
    mid = TokenMatrix(x1, list(t.patch_ids))

    if hook is not None and block_id in cfg.condense_blocks:
        ctx_obj = CondenseContext(block_id=block_id, tokens_in=t, trace=trace,
                                  block=blk, config=cfg)
        reduced = hook(mid, ctx_obj)
        _check_hook_result(mid, reduced, cfg)
        mid = reduced

    xn2 = kernels.row_layernorm(mid.tokens, blk.ln2_g, blk.ln2_b, LN_EPS)
    hidden = kernels.gelu(kernels.matmul(xn2, blk.mlp_in_w) + blk.mlp_in_b)
    mlp_out = kernels.matmul(hidden, blk.mlp_out_w) + blk.mlp_out_b
    x2 = (mid.tokens + mlp_out).astype(np.float32)

    trace.out_cls = x2[0].copy()
    return TokenMatrix(x2, mid.patch_ids), trace


def encode_tokens(t: TokenMatrix, cfg: EncoderConfig, w: EncoderWeights,
                  hook: Optional[Hook] = None) -> EncodeResult:
    """Run all blocks plus the final projection on an embedded token matrix."""
    traces = []
    stack = np.empty((cfg.layers, cfg.width), dtype=np.float32)
    for block_id in range(1, cfg.layers + 1):
        t, trace = forward_block(t, block_id, cfg, w, hook)
        traces.append(trace)
        stack[block_id - 1] = trace.out_cls
    final = kernels.layernorm(t.tokens[0], w.ln_post_g, w.ln_post_b, LN_EPS)
    z = kernels.matmul(w.proj, final[:, None])[:, 0]
    return EncodeResult(z=z, anchor_stack=stack, traces=traces)


def encode(pixels: np.ndarray, cfg: EncoderConfig, w: EncoderWeights,
           hook: Optional[Hook] = None) -> EncodeResult:
    """Full forward pass; anchor_stack row l-1 is block l's output anchor token."""
    return encode_tokens(embed(pixels, cfg, w), cfg, w, hook)


def zero_shot_probs(z: np.ndarray, text_embeddings: np.ndarray,
                    tau: float) -> np.ndarray:
    """Class probabilities from cosine similarities at temperature tau."""
    if tau <= 0:
        raise InputError("temperature must be positive")
    sims = np.array([kernels.cosine(z, row) for row in text_embeddings],
                    dtype=np.float64)
    return kernels.softmax(sims, 1.0 / tau)


# --- archive loading --------------------------------------------------------

def load_encoder(ar: TensorArchive, condense_blocks=(), heads: int = None):
    """Build (EncoderConfig, EncoderWeights) from ``visual/*`` entries.

    Geometry is inferred from tensor shapes; the head count comes from the
    ``visual/meta/heads`` entry unless overridden.
    """
    patch_embed = ar.read_f32("visual/patch_embed")
    pos_embed = ar.read_f32("visual/pos_embed")
    dv = patch_embed.shape[0]
    patch_side = int(round(np.sqrt(patch_embed.shape[1] / 3)))
    n = pos_embed.shape[0] - 1
    grid = int(round(np.sqrt(n)))
    if grid * grid != n:
        raise InputError(f"pos_embed implies a non-square patch grid ({n} patches)")
    layers = 0
    while f"visual/blocks/{layers}/wq" in ar:
        layers += 1
    if layers == 0:
        raise InputError("archive holds no transformer blocks")
    mlp_in = ar.read_f32("visual/blocks/0/mlp_in.w")
    proj = ar.read_f32("visual/proj")
    if heads is None:
        if "visual/meta/heads" not in ar:
            raise InputError("archive lacks visual/meta/heads; pass heads explicitly")
        heads = ar.read_scalar("visual/meta/heads")

    cfg = EncoderConfig(image_side=grid * patch_side, patch_side=patch_side,
                        layers=layers, heads=heads, width=dv,
                        mlp_ratio=mlp_in.shape[1] / dv, embed_dim=proj.shape[0],
                        condense_blocks=tuple(condense_blocks))
    blocks = []
    for i in range(layers):
        pre = f"visual/blocks/{i}/"
        blocks.append(BlockWeights(
            ln1_g=ar.read_f32(pre + "ln1.g"), ln1_b=ar.read_f32(pre + "ln1.b"),
            wq=ar.read_f32(pre + "wq"), wk=ar.read_f32(pre + "wk"),
            wv=ar.read_f32(pre + "wv"), wo=ar.read_f32(pre + "wo"),
            ln2_g=ar.read_f32(pre + "ln2.g"), ln2_b=ar.read_f32(pre + "ln2.b"),
            mlp_in_w=ar.read_f32(pre + "mlp_in.w"), mlp_in_b=ar.read_f32(pre + "mlp_in.b"),
            mlp_out_w=ar.read_f32(pre + "mlp_out.w"), mlp_out_b=ar.read_f32(pre + "mlp_out.b")))
    weights = EncoderWeights(patch_embed=patch_embed, pos_embed=pos_embed,
                             cls_init=ar.read_f32("visual/cls"), blocks=blocks,
                             ln_post_g=ar.read_f32("visual/ln_post.g"),
                             ln_post_b=ar.read_f32("visual/ln_post.b"), proj=proj)
    weights.validate(cfg)
    return cfg, weights


def save_encoder(writer, cfg: EncoderConfig, w: EncoderWeights) -> None:
    """Serialize weights under the ``visual/*`` naming scheme."""
    writer.add_f32("visual/patch_embed", w.patch_embed)
    writer.add_f32("visual/pos_embed", w.pos_embed)
    writer.add_f32("visual/cls", w.cls_init)
    writer.add_i64("visual/meta/heads", cfg.heads)
    for i, blk in enumerate(w.blocks):
        pre = f"visual/blocks/{i}/"
        writer.add_f32(pre + "ln1.g", blk.ln1_g)
        writer.add_f32(pre + "ln1.b", blk.ln1_b)
        writer.add_f32(pre + "wq", blk.wq)
        writer.add_f32(pre + "wk", blk.wk)
        writer.add_f32(pre + "wv", blk.wv)
        writer.add_f32(pre + "wo", blk.wo)
        writer.add_f32(pre + "ln2.g", blk.ln2_g)
        writer.add_f32(pre + "ln2.b", blk.ln2_b)
        writer.add_f32(pre + "mlp_in.w", blk.mlp_in_w)
        writer.add_f32(pre + "mlp_in.b", blk.mlp_in_b)
        writer.add_f32(pre + "mlp_out.w", blk.mlp_out_w)
        writer.add_f32(pre + "mlp_out.b", blk.mlp_out_b)
    writer.add_f32("visual/ln_post.g", w.ln_post_g)
    writer.add_f32("visual/ln_post.b", w.ln_post_b)
    writer.add_f32("visual/proj", w.proj)
