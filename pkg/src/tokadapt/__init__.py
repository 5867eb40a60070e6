"""Training-free test-time adaptation for zero-shot ViT classifiers.

The engine streams unlabeled images through a CLIP-style visual encoder,
condenses uninformative patch tokens mid-network under guidance of a
per-class reservoir of past anchor tokens, self-corrects the zero-shot
logits, and accounts for the compute saved.
"""

from .archive import ArchiveWriter, TensorArchive, iter_dataset, write_dataset
from .condensation import (CondensationPlan, Partition, StageCounts,
                           augmented_scores, baseline_scores, condense,
                           condense_tokens, cross_head_rank, kcenter_greedy,
                           merge_clusters, partition, round_half_up)
from .correction import correct, layer_weights, token_level_probs
from .encoder import (BlockTrace, BlockWeights, CondenseContext, EncodeResult,
                      EncoderConfig, EncoderWeights, TokenMatrix, embed,
                      encode, encode_tokens, forward_block, load_encoder,
                      save_encoder, zero_shot_probs)
from .errors import (ArchiveError, ContractError, DegenerateVectorError,
                     DomainError, EngineError, InputError, ShapeError)
from .kernels import cosine, gelu, layernorm, matmul, softmax
from .pipeline import (Engine, RunConfig, SampleResult, StageDetail,
                       flops_estimate, flops_walk)
from .reservoir import (AdmissionOutcome, AnchorRecord, Reservoir,
                        class_entropy)

__version__ = "0.1.0"
