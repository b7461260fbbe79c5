"""Sentence records, vocabularies, embedding files and BIO validation."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

AE_TAGS = ("BA", "IA", "BP", "IP", "O")
AS_TAGS = ("pos", "neg", "neu")
NO_SENTIMENT = "NONE"
ASPECT_TAGS = frozenset({"BA", "IA"})
PAD, UNK = "<pad>", "<unk>"
PAD_INDEX, UNK_INDEX = 0, 1

AE_INDEX = {t: i for i, t in enumerate(AE_TAGS)}
AS_INDEX = {t: i for i, t in enumerate(AS_TAGS)}


class CorpusError(ValueError):
    pass


class BIOWarning(UserWarning):
    pass


@dataclass
class SentenceRecord:
    tokens: list[str]
    ae_tags: list[str] | None
    as_tags: list[str] | None
    heads: list[int]
    deprels: list[str]
    line: int | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def has_tags(self) -> bool:
        return self.ae_tags is not None and self.as_tags is not None

    def validate(self, require_tags: bool = True) -> None:
        where = f"line {self.line}: " if self.line is not None else ""
        n = len(self.tokens)
        if n < 1:
            raise CorpusError(f"{where}record has no tokens")
        seqs = {"heads": self.heads, "deprels": self.deprels}
        if self.ae_tags is not None or require_tags:
            seqs["ae_tags"] = self.ae_tags
            seqs["as_tags"] = self.as_tags
        for key, seq in seqs.items():
            if seq is None:
                raise CorpusError(f"{where}missing field {key!r}")
            if len(seq) != n:
                raise CorpusError(f"{where}length mismatch: {key} has {len(seq)} entries, tokens has {n}")
        for i, (h, rel) in enumerate(zip(self.heads, self.deprels)):
            if not isinstance(h, int) or isinstance(h, bool) or not 0 <= h <= n:
                raise CorpusError(f"{where}head {h!r} of token {i + 1} outside [0, {n}]")
            if h == i + 1:
                raise CorpusError(f"{where}token {i + 1} is its own head")
            if not rel:
                raise CorpusError(f"{where}empty relation label on token {i + 1}")
        if self.ae_tags is None:
            return
        validate_bio(self.ae_tags, strict=True)
        for i, (ae, sent) in enumerate(zip(self.ae_tags, self.as_tags)):
            if sent != NO_SENTIMENT and sent not in AS_INDEX:
                raise CorpusError(f"{where}unknown sentiment tag {sent!r} on token {i + 1}")
            if ae in ASPECT_TAGS and sent == NO_SENTIMENT:
                raise CorpusError(f"{where}aspect token {i + 1} carries no sentiment")
            if ae not in ASPECT_TAGS and sent != NO_SENTIMENT:
                raise CorpusError(f"{where}non-aspect token {i + 1} carries sentiment {sent!r}")

    def to_dict(self) -> dict:
        out = {"tokens": self.tokens}
        if self.ae_tags is not None:
            out["ae_tags"] = self.ae_tags
            out["as_tags"] = self.as_tags
        out["heads"] = self.heads
        out["deprels"] = self.deprels
        return out

    @classmethod
    def from_dict(cls, obj: dict, line: int | None = None) -> "SentenceRecord":
        where = f"line {line}: " if line is not None else ""
        if not isinstance(obj, dict):
            raise CorpusError(f"{where}record must be an object")
        for key in ("tokens", "heads", "deprels"):
            if key not in obj:
                raise CorpusError(f"{where}missing field {key!r}")
        return cls(
            tokens=list(obj["tokens"]),
            ae_tags=list(obj["ae_tags"]) if obj.get("ae_tags") is not None else None,
            as_tags=list(obj["as_tags"]) if obj.get("as_tags") is not None else None,
            heads=list(obj["heads"]),
            deprels=list(obj["deprels"]),
            line=line,
        )


def validate_bio(tags: Sequence[str], strict: bool = False) -> list[str]:
    """Check a BIO sequence over the AE tag set.

    An ``IA`` (``IP``) that does not follow ``BA``/``IA`` (``BP``/``IP``) is
    an error when ``strict``, otherwise it is rewritten to ``BA`` (``BP``)
    and a ``BIOWarning`` is issued. Returns the (possibly repaired) tags.
    """
    fixed = list(tags)
    repaired = []
    prev = "O"
    for i, tag in enumerate(fixed):
        if tag not in AE_INDEX:
            raise CorpusError(f"unknown AE tag {tag!r} at position {i}")
        if tag == "IA" and prev not in ("BA", "IA"):
            if strict:
                raise CorpusError(f"IA at position {i} does not continue an aspect term")
            fixed[i] = "BA"
            repaired.append(i)
        elif tag == "IP" and prev not in ("BP", "IP"):
            if strict:
                raise CorpusError(f"IP at position {i} does not continue an opinion term")
            fixed[i] = "BP"
            repaired.append(i)
        prev = fixed[i]
    if repaired:
        warnings.warn(f"repaired orphan inside-tags at positions {repaired}", BIOWarning, stacklevel=2)
    return fixed


def load_dataset(path, require_tags: bool = True, drop_unknown_sentiment: bool = True) -> list[SentenceRecord]:
    """Read one JSON record per line.

    Records whose sentiment falls outside pos/neg/neu (e.g. ``conflict``) are
    dropped and counted when ``drop_unknown_sentiment`` is set.
    """
    records = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: not valid JSON ({exc.msg})") from None
            rec = SentenceRecord.from_dict(obj, line=lineno)
            if drop_unknown_sentiment and rec.as_tags is not None:
                if any(s != NO_SENTIMENT and s not in AS_INDEX for s in rec.as_tags):
                    dropped += 1
                    continue
            rec.validate(require_tags=require_tags)
            records.append(rec)
    if dropped:
        logger.warning("%s: dropped %d records with sentiment outside %s", path, dropped, AS_TAGS)
    return records


def save_dataset(records: Iterable[SentenceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def conllu_to_records(path) -> list[SentenceRecord]:
    """Convert 10-column CoNLL-U into untagged records (FORM, HEAD, DEPREL).

    Multiword-token ranges and empty nodes are skipped.
    """
    records = []
    tokens, heads, rels = [], [], []
    start = None

    def flush():
        if tokens:
            rec = SentenceRecord(list(tokens), None, None, list(heads), list(rels), line=start)
            rec.validate(require_tags=False)
            records.append(rec)
        tokens.clear(); heads.clear(); rels.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                start = None
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise CorpusError(f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}")
            if "-" in cols[0] or "." in cols[0]:
                continue
            if start is None:
                start = lineno
            tokens.append(cols[1])
            heads.append(int(cols[6]))
            rels.append(cols[7])
    flush()
    return records


@dataclass
class Vocabulary:
    """Token index with reserved padding (0) and unknown (1) rows."""

    itos: list[str] = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise CorpusError("duplicate entries in vocabulary")

    @classmethod
    def build(cls, records: Iterable[SentenceRecord], extra: Iterable[str] = ()) -> "Vocabulary":
        words = []
        seen = {PAD, UNK}
        for rec in records:
            for tok in rec.tokens:
                if tok not in seen:
                    seen.add(tok)
                    words.append(tok)
        for tok in extra:
            if tok not in seen:
                seen.add(tok)
                words.append(tok)
        return cls([PAD, UNK] + words)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word) -> bool:
        return word in self.stoi

    def index(self, word: str) -> int:
        idx = self.stoi.get(word)
        if idx is None:
            idx = self.stoi.get(word.lower(), UNK_INDEX)
        return idx

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in indices]


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def load_embeddings(path, vocab: Vocabulary, dtype=np.float32) -> EmbeddingTable:
    """Read ``word v1 ... vD`` lines into a |V| x D table aligned with ``vocab``.

    The unknown row and every vocabulary word missing from the file take
    the mean of all loaded vectors; the padding row is zero.
    """
    found: dict[int, np.ndarray] = {}
    total = None
    count = 0
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip().split(" ")
            if len(parts) < 2:
                if not raw.strip():
                    continue
                raise CorpusError(f"{path}: line {lineno} has no vector")
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise CorpusError(f"{path}: line {lineno} has dimension {len(values)}, expected {dim}")
            try:
                vec = np.asarray(values, dtype=np.float64)
            except ValueError:
                raise CorpusError(f"{path}: line {lineno} has non-numeric values") from None
            total = vec.copy() if total is None else total + vec
            count += 1
            idx = vocab.stoi.get(word)
            if idx is not None and idx > UNK_INDEX and idx not in found:
                found[idx] = vec
    if dim is None:
        raise CorpusError(f"{path}: no vectors found")
    mean = total / count
    matrix = np.tile(mean, (len(vocab), 1))
    matrix[PAD_INDEX] = 0.0
    for idx, vec in found.items():
        matrix[idx] = vec
    # lowercase fallback for words that only appear cased in the vocabulary
    if len(found) < len(vocab) - 2:
        lower_hits = _lowercase_fill(path, vocab, found, dim)
        for idx, vec in lower_hits.items():
            matrix[idx] = vec
    return EmbeddingTable(matrix.astype(dtype))


def _lowercase_fill(path, vocab: Vocabulary, found: dict, dim: int) -> dict:
    wanted: dict[str, list[int]] = {}
    for idx, word in enumerate(vocab.itos):
        if idx > UNK_INDEX and idx not in found and word.lower() != word:
            wanted.setdefault(word.lower(), []).append(idx)
    hits: dict[int, np.ndarray] = {}
    if not wanted:
        return hits
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.rstrip().split(" ")
            if parts[0] in wanted and len(parts) == dim + 1:
                for idx in wanted.pop(parts[0]):
                    hits[idx] = np.asarray(parts[1:], dtype=np.float64)
    return hits


def random_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator, scale: float = 0.25,
                      dtype=np.float32) -> EmbeddingTable:
    matrix = rng.uniform(-scale, scale, size=(len(vocab), dim)).astype(dtype)
    matrix[PAD_INDEX] = 0.0
    return EmbeddingTable(matrix)


@dataclass
class EncodedSentence:
    tokens: np.ndarray
    ae: np.ndarray | None
    sentiment: np.ndarray | None
    heads: np.ndarray
    aspect_mask: np.ndarray

    @property
    def n(self) -> int:
        return len(self.tokens)


def encode_sentence(record: SentenceRecord, vocab: Vocabulary) -> EncodedSentence:
    """Map a record to index arrays.

    ``sentiment`` is only meaningful where ``aspect_mask`` is set and holds 0
    elsewhere; ``aspect_mask`` marks gold BA/IA tokens.
    """
    tokens = np.array([vocab.index(t) for t in record.tokens], dtype=np.int64)
    heads = np.array(record.heads, dtype=np.int64)
    if record.ae_tags is None:
        return EncodedSentence(tokens, None, None, heads, np.zeros(len(tokens), dtype=bool))
    ae = np.array([AE_INDEX[t] for t in record.ae_tags], dtype=np.int64)
    mask = np.array([t in ASPECT_TAGS for t in record.ae_tags], dtype=bool)
    sentiment = np.array([AS_INDEX[s] if m else 0 for s, m in zip(record.as_tags, mask)], dtype=np.int64)
    return EncodedSentence(tokens, ae, sentiment, heads, mask)


def decode_sentence(encoded: EncodedSentence, vocab: Vocabulary) -> tuple[list[str], list[str], list[str]]:
    tokens = vocab.decode(encoded.tokens)
    ae = [AE_TAGS[i] for i in encoded.ae]
    sent = [AS_TAGS[s] if m else NO_SENTIMENT for s, m in zip(encoded.sentiment, encoded.aspect_mask)]
    return tokens, ae, sent
