"""Polynomial protection of face embeddings, with verification-accuracy,
inversion-attack and linkability evaluation."""

from .core import (
    FULL_RANGE,
    PolyParams,
    ProtectedTemplate,
    ScoreRange,
    compare,
    generate_params_naive,
    generate_params_strict,
    output_dimension,
    protect,
)
from .data import Corpus, Embedding, SyntheticConfig, generate_synthetic_corpus, load_corpus, save_corpus
from .errors import PolyProtectError

__version__ = "0.1.0"

__all__ = [
    "FULL_RANGE",
    "Corpus",
    "Embedding",
    "PolyParams",
    "PolyProtectError",
    "ProtectedTemplate",
    "ScoreRange",
    "SyntheticConfig",
    "compare",
    "generate_params_naive",
    "generate_params_strict",
    "generate_synthetic_corpus",
    "load_corpus",
    "output_dimension",
    "protect",
    "save_corpus",
]
