"""Joint AE/AS optimisation with aspect-masked sentiment loss."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import numerics as nx
from .corpus import SentenceRecord, Vocabulary, load_embeddings
from .evaluation import METRIC_KEYS, MetricsReport, score
from .graph import build_relation_vocab
from .inference import decode_trace, prepare
from .model import ForwardTrace, ModelConfig, ModelState, forward, init_state

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 50
    max_epochs: int = 80
    patience: int = 15
    dev_fraction: float = 0.20
    seed: int = 1
    max_grad_norm: float | None = None
    stop_at_perfect: bool = False

    def __post_init__(self):
        if not 0.0 < self.dev_fraction < 1.0:
            raise TrainingError(f"dev_fraction must lie in (0, 1), got {self.dev_fraction}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise TrainingError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.patience < 0:
            raise TrainingError(f"patience must be non-negative, got {self.patience}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class LossBreakdown:
    total: nx.Tensor
    ae: nx.Tensor
    as_: nx.Tensor
    ae_tokens: int
    as_tokens: int

    def values(self) -> dict:
        return {"total": float(self.total.data), "ae": float(self.ae.data), "as": float(self.as_.data),
                "ae_tokens": self.ae_tokens, "as_tokens": self.as_tokens}


def sentence_loss(trace: ForwardTrace, gold_ae: np.ndarray, gold_as: np.ndarray,
                  mask: np.ndarray) -> LossBreakdown:
    """Token-averaged cross-entropy on the final round.

    The sentiment term only counts tokens whose gold AE tag is BA or IA.
    """
    y_ae, y_as = trace.final_ae, trace.final_as
    n = y_ae.shape[0]
    if len(gold_ae) != n or len(gold_as) != n or len(mask) != n:
        raise TrainingError(f"trace covers {n} tokens but gold has {len(gold_ae)}")
    ae = nx.cross_entropy(y_ae, gold_ae).sum() * (1.0 / n)
    weights = nx.Tensor(mask.astype(y_as.dtype))
    as_ = (nx.cross_entropy(y_as, gold_as) * weights).sum() * (1.0 / n)
    return LossBreakdown(ae + as_, ae, as_, n, int(mask.sum()))


def joint_loss(traces: Sequence[ForwardTrace], golds: Sequence) -> LossBreakdown:
    """Mean over sentences of :func:`sentence_loss`; ``golds`` are EncodedSentences."""
    if len(traces) != len(golds) or not traces:
        raise TrainingError(f"{len(traces)} traces for {len(golds)} gold sentences")
    parts = [sentence_loss(t, g.ae, g.sentiment, g.aspect_mask) for t, g in zip(traces, golds)]
    scale = 1.0 / len(parts)
    ae = parts[0].ae
    as_ = parts[0].as_
    for p in parts[1:]:
        ae = ae + p.ae
        as_ = as_ + p.as_
    ae, as_ = ae * scale, as_ * scale
    return LossBreakdown(ae + as_, ae, as_, sum(p.ae_tokens for p in parts), sum(p.as_tokens for p in parts))


def split_dev(corpus: Sequence, fraction: float = 0.2, seed: int = 1) -> tuple[list, list]:
    """Seeded shuffle split; the dev side gets ``round(fraction * len)`` items (at least one)."""
    if not 0.0 < fraction < 1.0:
        raise TrainingError(f"dev fraction must lie in (0, 1), got {fraction}")
    if len(corpus) < 2:
        raise TrainingError(f"cannot split a corpus of {len(corpus)} records")
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_dev = min(max(1, int(round(fraction * len(corpus)))), len(corpus) - 1)
    dev = [corpus[i] for i in sorted(order[:n_dev])]
    train = [corpus[i] for i in sorted(order[n_dev:])]
    return train, dev


def _seed_streams(seed: int):
    init, shuffle, drop = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(drop)


def build_state(train: Sequence[SentenceRecord], model_config: ModelConfig, seed: int,
                extra_records: Sequence[SentenceRecord] = (), general_path=None, domain_path=None) -> ModelState:
    """Vocabularies, embedding tables and freshly initialised parameters."""
    init_rng, _, _ = _seed_streams(seed)
    everything = list(train) + list(extra_records)
    vocab = Vocabulary.build(everything)
    relations = build_relation_vocab(everything, model_config.inverse_relations, reserve_unknown=True)
    general = load_embeddings(general_path, vocab).matrix if general_path else None
    domain = None
    if model_config.domain_embeddings and domain_path:
        domain = load_embeddings(domain_path, vocab).matrix
    for name, table, dim in (("general", general, model_config.general_dim),
                             ("domain", domain, model_config.domain_dim)):
        if table is not None and table.shape[1] != dim:
            raise TrainingError(f"{name} embeddings have dimension {table.shape[1]}, config says {dim}")
    return init_state(model_config, vocab, relations, init_rng, general, domain)


def dev_loss(state: ModelState, prepared) -> float:
    if not prepared:
        return float("nan")
    traces = [forward(state, enc, g) for enc, g in prepared]
    return float(joint_loss(traces, [enc for enc, _ in prepared]).total.data)


def evaluate_prepared(state: ModelState, records, prepared) -> MetricsReport:
    preds = []
    for rec, (enc, g) in zip(records, prepared):
        trace = forward(state, enc, g)
        preds.append(decode_trace(rec, trace.final_ae.data, trace.final_as.data))
    return score(preds, records)


def fit(train: Sequence[SentenceRecord], dev: Sequence[SentenceRecord] | None = None,
        model_config: ModelConfig | None = None, train_config: TrainConfig | None = None,
        state: ModelState | None = None, log_path=None, general_path=None, domain_path=None,
        callback=None):
    """Mini-batch Adam with dev-F1-I early stopping.

    When ``dev`` is None the training records are split with
    ``train_config.dev_fraction``. Returns ``(best_state, log)`` where
    ``log`` is the list of per-epoch records also written to ``log_path``
    as JSON lines.
    """
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig()
    train = list(train)
    if dev is None:
        train, dev = split_dev(train, train_config.dev_fraction, train_config.seed)
    dev = list(dev)
    if not train:
        raise TrainingError("empty training set")
    if state is None:
        state = build_state(train, model_config, train_config.seed, dev, general_path, domain_path)
    _, shuffle_rng, drop_rng = _seed_streams(train_config.seed)

    train_prep = [prepare(state, r) for r in train]
    dev_prep = [prepare(state, r) for r in dev]
    for rec, (enc, _) in zip(train, train_prep):
        if enc.ae is None:
            raise TrainingError(f"training record at line {rec.line} has no gold tags")

    params = state.named_parameters()
    optimizer = nx.Adam(params, lr=train_config.learning_rate, max_grad_norm=train_config.max_grad_norm)
    table_names = [k for k in params if k.startswith("emb_")]
    best_state, best_f1, stale = state.copy(), -1.0, 0
    log = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, train_config.max_epochs + 1):
            order = shuffle_rng.permutation(len(train_prep))
            sums = {"total": 0.0, "ae": 0.0, "as": 0.0}
            n_batches = 0
            for b, lo in enumerate(range(0, len(order), train_config.batch_size)):
                batch = [train_prep[i] for i in order[lo:lo + train_config.batch_size]]
                state.zero_grad()
                scale = 1.0 / len(batch)
                for enc, g in batch:
                    trace = forward(state, enc, g, rng=drop_rng)
                    part = sentence_loss(trace, enc.ae, enc.sentiment, enc.aspect_mask)
                    value = float(part.total.data)
                    if not np.isfinite(value):
                        raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
                    (part.total * scale).backward()
                    sums["total"] += value * scale
                    sums["ae"] += float(part.ae.data) * scale
                    sums["as"] += float(part.as_.data) * scale
                for name in table_names:
                    if params[name].grad is not None:
                        params[name].grad[0] = 0.0
                try:
                    optimizer.step()
                except FloatingPointError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
                n_batches += 1
            metrics = evaluate_prepared(state, dev, dev_prep) if dev else None
            f1_i = metrics.f1_i if metrics else 0.0
            entry = {
                "epoch": epoch,
                "train_loss": sums["total"] / n_batches,
                "train_ae_loss": sums["ae"] / n_batches,
                "train_as_loss": sums["as"] / n_batches,
                "dev_loss": dev_loss(state, dev_prep),
                "dev": {k: metrics[k] for k in METRIC_KEYS} if metrics else None,
                "seed": train_config.seed,
                "timestamp": time.time(),
            }
            improved = f1_i > best_f1
            if improved:
                best_state, best_f1, stale = state.copy(), f1_i, 0
            else:
                stale += 1
            entry["best_dev_f1_i"] = best_f1
            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                log_fh.flush()
            logger.info("epoch %d loss %.4f dev F1-I %.4f", epoch, entry["train_loss"], f1_i)
            if callback is not None:
                callback(entry, state)
            if train_config.stop_at_perfect and f1_i >= 1.0:
                break
            if stale > train_config.patience:
                break
    finally:
        if log_fh:
            log_fh.close()
    return best_state, log


def mean_metrics(reports: Sequence[MetricsReport]) -> dict:
    if not reports:
        raise TrainingError("no reports to average")
    return {k: float(np.mean([r[k] for r in reports])) for k in METRIC_KEYS}
