"""Visual word sense disambiguation harness.

Given an ambiguous word inside a short context phrase and ten candidate
images, pick the image showing the intended sense.  Two routes are
implemented: similarity ranking over precomputed embeddings (optionally
with a batch-frequency penalty and LLM-enriched phrases), and
multiple-choice question answering over image captions.
"""

from .dataset import Dataset, VwsdInstance, load_dataset
from .embeddings import EmbeddingRecord, EmbeddingStore, load_embeddings, similarity
from .ranking import PenaltyTable, RankingResult, compute_penalty, rank_candidates

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "VwsdInstance",
    "load_dataset",
    "EmbeddingRecord",
    "EmbeddingStore",
    "load_embeddings",
    "similarity",
    "PenaltyTable",
    "RankingResult",
    "compute_penalty",
    "rank_candidates",
    "__version__",
]
