"""Default classifier models, trained lazily from the bundled corpora.

Training is seeded and the corpora are generated deterministically, so
every process ends up with identical models; nothing is fetched or
persisted unless a caller saves a model explicitly.
"""
from __future__ import annotations

from functools import lru_cache

from . import mlcore
from .mlcore import TrainParams, TreeEnsembleModel


@lru_cache(maxsize=1)
def default_url_model() -> TreeEnsembleModel:
    from .corpus import url_corpus
    from .urlfeat import TRAINED_FEATURES, extract_url_features
    rows = [(extract_url_features(url).trainable(), label)
            for url, label in url_corpus(count=400, seed=31)]
    return mlcore.train(rows, TrainParams(n_trees=60, seed=101),
                        feature_schema=list(TRAINED_FEATURES))


@lru_cache(maxsize=1)
def default_obfuscation_model() -> TreeEnsembleModel:
    from .corpus import obfuscation_corpus
    from .obfuscation import FEATURE_NAMES, extract_obf_features
    rows = [(extract_obf_features(src).as_list(), label)
            for src, label in obfuscation_corpus(pairs=60, seed=23)]
    return mlcore.train(rows, TrainParams(n_trees=60, seed=202),
                        feature_schema=list(FEATURE_NAMES))


@lru_cache(maxsize=1)
def default_screen_model() -> TreeEnsembleModel:
    from .corpus import behavior_vector_corpus
    from .staticseq import BEHAVIOR_FEATURE_NAMES
    rows = behavior_vector_corpus(count=240, seed=41)
    return mlcore.train(rows, TrainParams(n_trees=60, seed=303),
                        feature_schema=list(BEHAVIOR_FEATURE_NAMES))
