"""Coherence/cohesion discriminators and negative-critical sequence training.

The heavy lifting lives in the C++ extension; this package re-exports the
core operations.
"""

from ncst._core import (
    __version__,
    bleu,
    cosine,
    decompose_pairs,
    derangement,
    inter_unique,
    intra_unique,
    length_ratio,
    make_negatives_coherence,
    make_negatives_cohesion,
    ranking_loss,
    split_sentences,
    tokenize,
    weighted_avg,
    write_synthetic_corpus,
)

__all__ = [
    "__version__",
    "bleu",
    "cosine",
    "decompose_pairs",
    "derangement",
    "inter_unique",
    "intra_unique",
    "length_ratio",
    "make_negatives_coherence",
    "make_negatives_cohesion",
    "ranking_loss",
    "split_sentences",
    "tokenize",
    "weighted_avg",
    "write_synthetic_corpus",
]
