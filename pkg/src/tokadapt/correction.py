"""Logits self-correction from stored anchor stacks.

A sample's per-block anchor tokens are compared layer-by-layer against the
reservoir's stored stacks; the layer-weighted mean cosine per class acts as
a token-level classifier whose score is added (scaled) to the zero-shot
probabilities before the argmax. The corrected vector is never renormalized.
"""

import numpy as np

from .errors import DegenerateVectorError, InputError
from .kernels import cosine
from .reservoir import Reservoir

DIRECTIONS = ("shallow", "deep")


def layer_weights(beta: float, layers: int, direction: str = "shallow") -> np.ndarray:
    """Normalized exponential layer weights w_l ∝ exp(±l / beta).

    ``deep`` puts mass on the last blocks, ``shallow`` on the first; large
    beta flattens both toward uniform. Computed max-subtracted so extreme
    beta never overflows.
    """
    if beta <= 0:
        raise InputError("beta must be positive")
    if direction not in DIRECTIONS:
        raise InputError(f"direction must be one of {DIRECTIONS}")
    sign = 1.0 if direction == "deep" else -1.0
    exponents = sign * np.arange(1, layers + 1, dtype=np.float64) / beta
    e = np.exp(exponents - exponents.max())
    return e / e.sum()


def token_level_probs(anchor_stack: np.ndarray, res: Reservoir,
                      weights: np.ndarray) -> np.ndarray:
    """Layer-weighted mean cosine of the sample's anchor stack against each
    class's stored stacks; classes with empty buffers score 0."""
    layers = anchor_stack.shape[0]
    if weights.shape[0] != layers:
        raise InputError(f"{weights.shape[0]} layer weights for {layers} layers")
    out = np.zeros(res.num_classes, dtype=np.float64)
    for c, buf in enumerate(res.buffers):
        if not buf:
            continue
        total = 0.0
        for rec in buf:
            per_layer = 0.0
            for l in range(layers):
                try:
                    per_layer += weights[l] * cosine(anchor_stack[l],
                                                     rec.anchor_stack[l])
                except DegenerateVectorError:
                    pass        # a degenerate layer contributes nothing
            total += per_layer
        out[c] = total / len(buf)
    return out


def correct(p: np.ndarray, p_token: np.ndarray, lam: float) -> np.ndarray:
    """p + lam * p_token, elementwise; only the argmax is meaningful."""
    if lam < 0:
        raise InputError("correction weight must be nonnegative")
    return np.asarray(p, dtype=np.float64) + lam * np.asarray(p_token, np.float64)
