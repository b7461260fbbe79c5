"""scikit-learn style wrapper around model construction, training and decoding."""
from __future__ import annotations

from dataclasses import fields

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .corpus import CorpusError, SentenceRecord
from .inference import Prediction, evaluate_records, prepare, predict_records
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .training import TrainConfig, fit

_MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))


def check_records(X, require_tags: bool = True) -> list[SentenceRecord]:
    """Accept records or plain dicts; validate each one."""
    if isinstance(X, (SentenceRecord, dict)):
        raise CorpusError("expected a sequence of records, got a single record")
    out = []
    for i, item in enumerate(X):
        rec = item if isinstance(item, SentenceRecord) else SentenceRecord.from_dict(item, line=i + 1)
        rec.validate(require_tags=require_tags)
        out.append(rec)
    if not out:
        raise CorpusError("no records given")
    return out


class SDEINTagger(BaseEstimator):
    """Sequence tagger for aspect/opinion terms and aspect sentiment.

    ``fit`` takes a list of tagged records (``y`` is unused; the gold
    sequences live on the records). After fitting, ``state_`` holds the
    best-dev parameters and ``log_`` the per-epoch training log.
    """

    def __init__(self, hidden_size=256, relation_size=50, rounds=2, cnn_windows=(3, 5), gcn_layers=2,
                 encoder="dregcn+cnn", message_passing="representations", opinion_passing=True,
                 domain_embeddings=True, general_dim=300, domain_dim=100, embedding_dropout=0.5,
                 shared_dropout=0.3, adjacency_norm="none", inverse_relations="distinct",
                 precision="standard", learning_rate=0.0005, batch_size=50, max_epochs=80, patience=15,
                 dev_fraction=0.2, seed=1, max_grad_norm=None, stop_at_perfect=False,
                 general_embeddings=None, domain_embeddings_path=None):
        self.hidden_size = hidden_size
        self.relation_size = relation_size
        self.rounds = rounds
        self.cnn_windows = cnn_windows
        self.gcn_layers = gcn_layers
        self.encoder = encoder
        self.message_passing = message_passing
        self.opinion_passing = opinion_passing
        self.domain_embeddings = domain_embeddings
        self.general_dim = general_dim
        self.domain_dim = domain_dim
        self.embedding_dropout = embedding_dropout
        self.shared_dropout = shared_dropout
        self.adjacency_norm = adjacency_norm
        self.inverse_relations = inverse_relations
        self.precision = precision
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dev_fraction = dev_fraction
        self.seed = seed
        self.max_grad_norm = max_grad_norm
        self.stop_at_perfect = stop_at_perfect
        self.general_embeddings = general_embeddings
        self.domain_embeddings_path = domain_embeddings_path

    def model_config(self) -> ModelConfig:
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_KEYS})

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{k: getattr(self, k) for k in _TRAIN_KEYS})

    def fit(self, X, y=None, dev=None, log_path=None):
        records = check_records(X)
        dev_records = check_records(dev) if dev is not None else None
        self.state_, self.log_ = fit(
            records, dev_records, self.model_config(), self.train_config(), log_path=log_path,
            general_path=self.general_embeddings, domain_path=self.domain_embeddings_path,
        )
        return self

    def predict(self, X) -> list[Prediction]:
        check_is_fitted(self, "state_")
        return predict_records(self.state_, check_records(X, require_tags=False))

    def transform(self, X) -> list:
        """Final-round shared representations, one n x d array per sentence."""
        check_is_fitted(self, "state_")
        out = []
        for rec in check_records(X, require_tags=False):
            enc, graph = prepare(self.state_, rec)
            out.append(forward(self.state_, enc, graph).h_s[-1].data)
        return out

    def evaluate(self, X):
        check_is_fitted(self, "state_")
        return evaluate_records(self.state_, check_records(X))

    def score(self, X, y=None) -> float:
        return self.evaluate(X).f1_i

    def save(self, path, meta: dict | None = None) -> None:
        check_is_fitted(self, "state_")
        save_checkpoint(self.state_, path, {"train_config": self.train_config().to_dict(), **(meta or {})})

    @classmethod
    def load(cls, path) -> "SDEINTagger":
        state, meta = load_checkpoint(path)
        params = dict(state.config.to_dict())
        params.update({k: v for k, v in meta.get("train_config", {}).items() if k in _TRAIN_KEYS})
        est = cls(**params)
        est.state_ = state
        est.log_ = []
        return est

    def __sklearn_is_fitted__(self) -> bool:
        return hasattr(self, "state_")


__all__ = ["SDEINTagger", "check_records", "NotFittedError"]
