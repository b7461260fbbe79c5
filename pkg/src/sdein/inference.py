"""Prediction and corpus evaluation with a trained ModelState."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import AE_TAGS, AS_TAGS, ASPECT_TAGS, NO_SENTIMENT, BIOWarning, SentenceRecord, encode_sentence, validate_bio
from .evaluation import MetricsReport, extract_pairs, score
from .graph import build_graph
from .model import ModelState, forward


@dataclass
class Prediction:
    tokens: list[str]
    ae_tags: list[str]
    as_tags: list[str]
    polarities: list[str]
    pairs: list[dict]

    def to_dict(self, source: SentenceRecord | None = None) -> dict:
        out = {"tokens": self.tokens}
        if source is not None:
            out["heads"] = source.heads
            out["deprels"] = source.deprels
        out["pred_ae_tags"] = self.ae_tags
        out["pred_as_tags"] = self.as_tags
        out["pred_polarities"] = self.polarities
        out["pairs"] = self.pairs
        return out


def prepare(state: ModelState, record: SentenceRecord):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        graph = build_graph(record, state.relations)
    return encode_sentence(record, state.vocab), graph


def decode_trace(record: SentenceRecord, y_ae: np.ndarray, y_as: np.ndarray) -> Prediction:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BIOWarning)
        ae = validate_bio([AE_TAGS[i] for i in y_ae.argmax(axis=1)])
    polarities = [AS_TAGS[i] for i in y_as.argmax(axis=1)]
    as_tags = [pol if tag in ASPECT_TAGS else NO_SENTIMENT for tag, pol in zip(ae, polarities)]
    pairs = [
        {"start": s.start, "end": s.end, "term": " ".join(record.tokens[s.start:s.end + 1]), "sentiment": s.sentiment}
        for s in extract_pairs(ae, polarities) if s.kind == "aspect"
    ]
    return Prediction(list(record.tokens), ae, as_tags, polarities, pairs)


def predict_record(state: ModelState, record: SentenceRecord) -> Prediction:
    encoded, graph = prepare(state, record)
    trace = forward(state, encoded, graph)
    return decode_trace(record, trace.final_ae.data, trace.final_as.data)


def predict_records(state: ModelState, records) -> list[Prediction]:
    return [predict_record(state, r) for r in records]


def evaluate_records(state: ModelState, records) -> MetricsReport:
    return score(predict_records(state, records), records)
