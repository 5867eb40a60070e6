"""Shared toy-model builders for the test suite."""

import numpy as np

from tokadapt import (ArchiveWriter, BlockWeights, EncoderConfig,
                      EncoderWeights, save_encoder, write_dataset)

F32 = np.float32


def make_config(layers=4, heads=4, width=64, embed=32, side=32, patch=8,
                blocks=()):
    return EncoderConfig(image_side=side, patch_side=patch, layers=layers,
                         heads=heads, width=width, mlp_ratio=4.0,
                         embed_dim=embed, condense_blocks=tuple(blocks))


def make_weights(cfg: EncoderConfig, seed=0) -> EncoderWeights:
    rng = np.random.default_rng(seed)
    dv = cfg.width
    hidden = int(cfg.mlp_ratio * dv)
    pdim = 3 * cfg.patch_side ** 2

    def mat(rows, cols, scale):
        return rng.normal(0.0, scale, (rows, cols)).astype(F32)

    def vec(n, scale=1.0, loc=0.0):
        return rng.normal(loc, scale, n).astype(F32)

    blocks = []
    for _ in range(cfg.layers):
        blocks.append(BlockWeights(
            ln1_g=vec(dv, 0.05, 1.0), ln1_b=vec(dv, 0.05),
            wq=mat(dv, dv, dv ** -0.5), wk=mat(dv, dv, dv ** -0.5),
            wv=mat(dv, dv, dv ** -0.5), wo=mat(dv, dv, dv ** -0.5),
            ln2_g=vec(dv, 0.05, 1.0), ln2_b=vec(dv, 0.05),
            mlp_in_w=mat(dv, hidden, dv ** -0.5), mlp_in_b=vec(hidden, 0.05),
            mlp_out_w=mat(hidden, dv, hidden ** -0.5), mlp_out_b=vec(dv, 0.05)))
    return EncoderWeights(
        patch_embed=mat(dv, pdim, pdim ** -0.5),
        pos_embed=mat(cfg.num_patches + 1, dv, 0.1),
        cls_init=vec(dv, 1.0),
        blocks=blocks,
        ln_post_g=vec(dv, 0.05, 1.0), ln_post_b=vec(dv, 0.05),
        proj=mat(cfg.embed_dim, dv, dv ** -0.5))


def make_text(num_classes, embed_dim, seed=1):
    rng = np.random.default_rng(seed)
    t = rng.normal(0.0, 1.0, (num_classes, embed_dim))
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    return t.astype(F32)


def make_images(cfg, count, seed=2):
    rng = np.random.default_rng(seed)
    return [rng.normal(0.0, 1.0, (3, cfg.image_side, cfg.image_side)).astype(F32)
            for _ in range(count)]


def write_bundle(path, cfg, weights, text, classnames, pixels, labels=None):
    """One archive holding model, text embeddings, and a dataset."""
    w = ArchiveWriter()
    save_encoder(w, cfg, weights)
    w.add_f32("text/embeddings", text)
    w.add_utf8("text/classnames", classnames)
    write_dataset(path, pixels, labels, writer=w)
    w.write(path)
    return path


def random_stack(rng, layers, width):
    return rng.normal(0.0, 1.0, (layers, width)).astype(F32)
