"""Span decoding, first-token sentiment pairing and the five ABSA metrics."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .corpus import AS_TAGS, BIOWarning, validate_bio

METRIC_KEYS = ("f1_a", "f1_o", "acc_s", "f1_s", "f1_i")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    kind: str
    sentiment: str | None = None

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise EvaluationError(f"bad span bounds ({self.start}, {self.end})")
        if self.kind not in ("aspect", "opinion"):
            raise EvaluationError(f"unknown span kind {self.kind!r}")
        if self.kind == "opinion" and self.sentiment is not None:
            raise EvaluationError("opinion spans carry no sentiment")


def decode_spans(ae_tags: Sequence[str]) -> list[Span]:
    """Maximal ``BA IA*`` runs become aspect spans, ``BP IP*`` runs opinion spans.

    Tags must already be valid BIO; see ``validate_bio`` for repair.
    """
    spans = []
    start = kind = None
    for i, tag in enumerate(list(ae_tags) + ["O"]):
        inside = (tag == "IA" and kind == "aspect") or (tag == "IP" and kind == "opinion")
        if inside:
            continue
        if kind is not None:
            spans.append(Span(start, i - 1, kind))
            start = kind = None
        if tag == "BA":
            start, kind = i, "aspect"
        elif tag == "BP":
            start, kind = i, "opinion"
        elif tag in ("IA", "IP"):
            raise EvaluationError(f"orphan {tag} at position {i}; repair tags before decoding")
    return spans


def pair_sentiment(spans: Sequence[Span], polarities: Sequence[str]) -> list[Span]:
    """Label each aspect span with the polarity predicted at its first token."""
    out = []
    for sp in spans:
        if sp.kind == "aspect":
            sp = Span(sp.start, sp.end, "aspect", polarities[sp.start])
        out.append(sp)
    return out


def extract_pairs(ae_tags: Sequence[str], polarities: Sequence[str], repair: bool = False) -> list[Span]:
    if repair:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BIOWarning)
            ae_tags = validate_bio(ae_tags)
    return pair_sentiment(decode_spans(ae_tags), polarities)


@dataclass
class MetricsReport:
    f1_a: float
    f1_o: float
    acc_s: float
    f1_s: float
    f1_i: float
    counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def __getitem__(self, key):
        return getattr(self, key)


def f1(matched: int, predicted: int, gold: int) -> float:
    precision = matched / predicted if predicted else 0.0
    recall = matched / gold if gold else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score(predicted, gold) -> MetricsReport:
    """Corpus-level metrics.

    Both arguments are aligned sequences of objects with ``ae_tags`` and
    ``as_tags``; a token's ``as_tags`` entry is the sentiment read at aspect
    starts. Predicted tags are BIO-repaired, gold tags must be valid.
    Sentiment accuracy and macro-F1 are computed only over predicted
    aspect spans that exactly match a gold span.
    """
    if len(predicted) != len(gold):
        raise EvaluationError(f"misaligned corpora: {len(predicted)} predicted vs {len(gold)} gold")
    c = {"aspect": [0, 0, 0], "opinion": [0, 0, 0], "pair": [0, 0, 0]}
    sent_pred = {s: 0 for s in AS_TAGS}
    sent_gold = {s: 0 for s in AS_TAGS}
    sent_hit = {s: 0 for s in AS_TAGS}
    extracted = correct = 0
    for idx, (p, g) in enumerate(zip(predicted, gold)):
        if len(p.ae_tags) != len(g.ae_tags):
            raise EvaluationError(f"sentence {idx}: {len(p.ae_tags)} predicted tags vs {len(g.ae_tags)} gold")
        p_spans = extract_pairs(p.ae_tags, p.as_tags, repair=True)
        g_spans = extract_pairs(validate_bio(g.ae_tags, strict=True), g.as_tags)
        for kind in ("aspect", "opinion"):
            ps = {(s.start, s.end) for s in p_spans if s.kind == kind}
            gs = {(s.start, s.end) for s in g_spans if s.kind == kind}
            c[kind][0] += len(ps & gs)
            c[kind][1] += len(ps)
            c[kind][2] += len(gs)
        p_pairs = {(s.start, s.end): s.sentiment for s in p_spans if s.kind == "aspect"}
        g_pairs = {(s.start, s.end): s.sentiment for s in g_spans if s.kind == "aspect"}
        c["pair"][0] += sum(1 for k, v in p_pairs.items() if g_pairs.get(k) == v)
        c["pair"][1] += len(p_pairs)
        c["pair"][2] += len(g_pairs)
        for key, pol in p_pairs.items():
            if key not in g_pairs:
                continue
            truth = g_pairs[key]
            extracted += 1
            if pol in sent_pred:
                sent_pred[pol] += 1
            sent_gold[truth] += 1
            if pol == truth:
                correct += 1
                sent_hit[truth] += 1
    macro = sum(f1(sent_hit[s], sent_pred[s], sent_gold[s]) for s in AS_TAGS) / len(AS_TAGS)
    counts = {
        "aspect": dict(zip(("matched", "predicted", "gold"), c["aspect"])),
        "opinion": dict(zip(("matched", "predicted", "gold"), c["opinion"])),
        "pair": dict(zip(("matched", "predicted", "gold"), c["pair"])),
        "sentiment": {"extracted": extracted, "correct": correct,
                      "per_class": {s: {"matched": sent_hit[s], "predicted": sent_pred[s], "gold": sent_gold[s]}
                                    for s in AS_TAGS}},
    }
    return MetricsReport(
        f1_a=f1(*c["aspect"]),
        f1_o=f1(*c["opinion"]),
        acc_s=correct / extracted if extracted else 0.0,
        f1_s=macro,
        f1_i=f1(*c["pair"]),
        counts=counts,
    )
