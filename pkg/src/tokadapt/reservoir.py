"""Per-class bounded buffers of anchor-token stacks keyed by entropy.

Each class keeps at most ``capacity`` records of past confidently-predicted
samples. A record stores the anchor-position token from every encoder block,
so later samples can (a) pick the best-matching class context while scoring
tokens and (b) compare their own anchor stack against stored ones for logits
correction.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import DegenerateVectorError, DomainError, InputError

STRATEGIES = ("fifo", "uncertainty", "similarity", "diversity")


def class_entropy(p: float) -> float:
    """Single-class entropy term -p * ln(p), with 0 ln 0 = 0."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * math.log(p))


@dataclass(eq=False)                # identity semantics: records hold arrays
class AnchorRecord:
    entropy_key: float
    anchor_stack: np.ndarray        # (L, D_v), block-output anchor tokens
    sample_seq: int                 # monotone admission counter


@dataclass
class AdmissionOutcome:
    status: str                     # admitted | rejected_pred_mismatch | rejected_by_strategy
    evicted_seq: Optional[int] = None

    @property
    def admitted(self) -> bool:
        return self.status == "admitted"


def _safe_cos(a: np.ndarray, b: np.ndarray) -> float:
    try:
        return kernels.cosine(a, b)
    except DegenerateVectorError:
        return 0.0


class Reservoir:
    """C bounded per-class buffers with a pluggable eviction strategy.

    Strategies when a buffer is full:

    * ``fifo``        — evict the oldest record, always admit.
    * ``uncertainty`` — admit only if the candidate's entropy key beats the
      current worst (strictly lower); the worst-key record is evicted.
    * ``similarity``  — as ``uncertainty``, plus the candidate's final-layer
      anchor must be at least as close (mean cosine) to the stored anchors
      as they are to each other on average.
    * ``diversity``   — pool stored records with the candidate, locate the
      most similar pair of final-layer anchors, and drop that pair's
      higher-entropy member (which may be the candidate itself).

    Entropy ties always retain the older record (lower ``sample_seq``).
    """

    def __init__(self, num_classes: int, capacity: int,
                 strategy: str = "diversity"):
        if num_classes < 1:
            raise InputError("reservoir needs at least one class")
        if capacity < 1:
            raise InputError("reservoir capacity must be >= 1")
        if strategy not in STRATEGIES:
            raise InputError(f"unknown strategy {strategy!r}; pick from {STRATEGIES}")
        self.num_classes = num_classes
        self.capacity = capacity
        self.strategy = strategy
        self.buffers = [[] for _ in range(num_classes)]

    def __len__(self):
        return sum(len(b) for b in self.buffers)

    def _final_anchor(self, rec: AnchorRecord) -> np.ndarray:
        return rec.anchor_stack[-1]

    def try_admit(self, class_id: int, probs: np.ndarray,
                  record: AnchorRecord) -> AdmissionOutcome:
        """Attempt to store ``record`` in class ``class_id``'s buffer.

        Only samples predicted as the class they are filed under are
        admissible; everything else is rejected outright.
        """
        if not (0 <= class_id < self.num_classes):
            raise InputError(f"class {class_id} outside [0, {self.num_classes})")
        if int(np.argmax(probs)) != class_id:
            return AdmissionOutcome("rejected_pred_mismatch")
        buf = self.buffers[class_id]
        if len(buf) < self.capacity:
            buf.append(record)
            return AdmissionOutcome("admitted")
        return getattr(self, f"_admit_{self.strategy}")(buf, record)

    # --- strategy implementations (full buffer) ---

    def _admit_fifo(self, buf, record):
        oldest = min(range(len(buf)), key=lambda i: buf[i].sample_seq)
        evicted = buf.pop(oldest)
        buf.append(record)
        return AdmissionOutcome("admitted", evicted.sample_seq)

    def _worst(self, buf) -> int:
        # highest entropy; among ties the newest loses first
        return max(range(len(buf)),
                   key=lambda i: (buf[i].entropy_key, buf[i].sample_seq))

    def _admit_uncertainty(self, buf, record):
        worst = self._worst(buf)
        if record.entropy_key >= buf[worst].entropy_key:
            return AdmissionOutcome("rejected_by_strategy")
        evicted = buf.pop(worst)
        buf.append(record)
        return AdmissionOutcome("admitted", evicted.sample_seq)

    def _admit_similarity(self, buf, record):
        cand = self._final_anchor(record)
        anchors = [self._final_anchor(r) for r in buf]
        mean_to_stored = float(np.mean([_safe_cos(cand, a) for a in anchors]))
        pair_cos = [_safe_cos(anchors[i], anchors[j])
                    for i in range(len(anchors)) for j in range(i + 1, len(anchors))]
        # with < 2 stored anchors there is no pairwise baseline to beat
        threshold = float(np.mean(pair_cos)) if pair_cos else -1.0
        if mean_to_stored < threshold:
            return AdmissionOutcome("rejected_by_strategy")
        return self._admit_uncertainty(buf, record)

    def _admit_diversity(self, buf, record):
        pool = list(buf) + [record]
        anchors = [self._final_anchor(r) for r in pool]
        best = None
        for i in range(len(pool)):
            for j in range(i + 1, len(pool)):
                sim = _safe_cos(anchors[i], anchors[j])
                if best is None or sim > best[0]:
                    best = (sim, i, j)
        _, i, j = best
        a, b = pool[i], pool[j]
        drop = a if (a.entropy_key, a.sample_seq) > (b.entropy_key, b.sample_seq) else b
        if drop is record:
            return AdmissionOutcome("rejected_by_strategy")
        buf.remove(drop)
        buf.append(record)
        return AdmissionOutcome("admitted", drop.sample_seq)

    # --- reads ---

    def class_mean(self, class_id: int, layer_row: int) -> Optional[np.ndarray]:
        """Arithmetic mean of stored anchor tokens at one stack row."""
        buf = self.buffers[class_id]
        if not buf:
            return None
        stacked = np.stack([r.anchor_stack[layer_row] for r in buf]).astype(np.float64)
        return stacked.mean(axis=0).astype(np.float32)

    def select_anchor_class(self, v_cls: np.ndarray, block_id: int):
        """Pick the class whose previous-layer mean anchor best matches
        ``v_cls`` (cosine); returns (class_id, mean anchor) or None when no
        buffer can answer (cold start, or block 1 has no previous layer)."""
        row = block_id - 2          # stack row of block (block_id - 1)'s output
        if row < 0:
            return None
        best = None
        for c in range(self.num_classes):
            mean = self.class_mean(c, row)
            if mean is None:
                continue
            try:
                sim = kernels.cosine(v_cls, mean)
            except DegenerateVectorError:
                continue
            if best is None or sim > best[0]:
                best = (sim, c, mean)
        if best is None:
            return None
        return best[1], best[2]

    def alignment(self, text_embeddings: np.ndarray, ln_g: np.ndarray,
                  ln_b: np.ndarray, proj: np.ndarray) -> dict:
        """Cosine between each class's projected mean final-layer anchor and
        its text embedding; only classes with stored records are reported."""
        out = {}
        for c in range(self.num_classes):
            mean = self.class_mean(c, -1)
            if mean is None:
                continue
            z = kernels.matmul(proj, kernels.layernorm(mean, ln_g, ln_b)[:, None])[:, 0]
            out[c] = _safe_cos(z, text_embeddings[c])
        return out

    # --- persistence (warm restarts) ---

    def snapshot(self, writer) -> None:
        for c, buf in enumerate(self.buffers):
            for i, rec in enumerate(buf):
                writer.add_f32(f"reservoir/{c}/{i}/stack", rec.anchor_stack)
                writer.add_f32(f"reservoir/{c}/{i}/key", np.float32(rec.entropy_key))
                writer.add_i64(f"reservoir/{c}/{i}/seq", rec.sample_seq)

    def restore(self, ar) -> None:
        for c in range(self.num_classes):
            i = 0
            while f"reservoir/{c}/{i}/stack" in ar:
                if i >= self.capacity:
                    raise InputError(f"snapshot exceeds capacity for class {c}")
                self.buffers[c].append(AnchorRecord(
                    entropy_key=float(ar.read_f32(f"reservoir/{c}/{i}/key").reshape(-1)[0]),
                    anchor_stack=ar.read_f32(f"reservoir/{c}/{i}/stack"),
                    sample_seq=ar.read_scalar(f"reservoir/{c}/{i}/seq")))
                i += 1
