"""Dense numeric primitives for the visual encoder and scoring logic.

All kernels take and return float32 arrays but accumulate reductions
(matrix products, softmax sums, normalization moments) in float64 so
results are deterministic and tight enough for identity tests.
"""

import numpy as np
from scipy.special import erf

from .errors import DegenerateVectorError, ShapeError

F32 = np.float32


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation, result cast to float32."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(F32)


def softmax(v: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Stable softmax of `scale * v` (max-subtracted, float64 sum)."""
    x = np.asarray(v, dtype=np.float64) * scale
    x -= x.max()
    e = np.exp(x)
    return (e / e.sum()).astype(F32)


def row_softmax(m: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """softmax() applied independently to each row of a 2-d array."""
    x = np.asarray(m, dtype=np.float64) * scale
    x -= x.max(axis=1, keepdims=True)
    e = np.exp(x)
    return (e / e.sum(axis=1, keepdims=True)).astype(F32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1].

    Raises DegenerateVectorError if either vector has zero norm.
    """
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"cosine dimension mismatch: {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector is undefined")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def layernorm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray,
              eps: float = 1e-5) -> np.ndarray:
    """Zero-mean unit-variance normalization followed by an affine map."""
    x = np.asarray(v, dtype=np.float64)
    if x.shape != np.shape(gain) or x.shape != np.shape(bias):
        raise ShapeError("layernorm gain/bias must match the input shape")
    mu = x.mean()
    var = x.var()
    out = (x - mu) / np.sqrt(var + eps) * np.asarray(gain, np.float64) + bias
    return out.astype(F32)


def row_layernorm(m: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                  eps: float = 1e-5) -> np.ndarray:
    """Per-row layernorm() of a 2-d array (each token normalized alone)."""
    x = np.asarray(m, dtype=np.float64)
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    out = (x - mu) / np.sqrt(var + eps) * np.asarray(gain, np.float64) + bias
    return out.astype(F32)


def gelu(v: np.ndarray) -> np.ndarray:
    """Exact-erf GELU: x * Phi(x)."""
    x = np.asarray(v, dtype=np.float64)
    return (x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))).astype(F32)
