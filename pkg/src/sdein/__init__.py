"""Joint aspect extraction and sentiment tagging over dependency graphs."""
from .corpus import SentenceRecord, Vocabulary, load_dataset, load_embeddings, validate_bio
from .evaluation import MetricsReport, Span, decode_spans, pair_sentiment, score
from .graph import DependencyGraph, RelationVocabulary, build_graph, build_relation_vocab
from .model import ABLATIONS, ForwardTrace, ModelConfig, ModelState, forward, load_checkpoint, save_checkpoint
from .training import TrainConfig, fit, joint_loss, split_dev
from .estimator import SDEINTagger

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "DependencyGraph", "ForwardTrace", "MetricsReport", "ModelConfig", "ModelState",
    "RelationVocabulary", "SDEINTagger", "SentenceRecord", "Span", "TrainConfig", "Vocabulary",
    "build_graph", "build_relation_vocab", "decode_spans", "fit", "forward", "joint_loss",
    "load_checkpoint", "load_dataset", "load_embeddings", "pair_sentiment", "save_checkpoint",
    "score", "split_dev", "validate_bio",
]
