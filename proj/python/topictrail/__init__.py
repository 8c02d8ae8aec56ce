from ._core import (
    REFUSAL,
    BetaTensor,
    Corpus,
    Retriever,
    Service,
    StubLlm,
    TopicTrailError,
    bigram_score,
    cache_key,
    evaluate,
    highlight,
    label_prompt,
    label_topic,
    npmi,
    preprocess,
    salient,
)

__all__ = [
    "REFUSAL",
    "BetaTensor",
    "Corpus",
    "Retriever",
    "Service",
    "StubLlm",
    "TopicTrailError",
    "bigram_score",
    "cache_key",
    "evaluate",
    "highlight",
    "label_prompt",
    "label_topic",
    "npmi",
    "preprocess",
    "salient",
]
