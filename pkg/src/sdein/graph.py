"""Adjacency and typed-relation structure of a dependency parse."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .corpus import SentenceRecord

SELF = "self"
UNK_REL = "unk_rel"
INVERSE_PREFIX = "inv:"


class GraphError(ValueError):
    pass


@dataclass
class RelationVocabulary:
    labels: list[str]
    inverse_relations: str = "distinct"

    def __post_init__(self):
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise GraphError("duplicate relation labels")
        if SELF not in self.index:
            raise GraphError("relation vocabulary must contain 'self'")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def unk_index(self) -> int | None:
        return self.index.get(UNK_REL)

    def forward(self, label: str) -> int | None:
        return self.index.get(label)

    def inverse(self, label: str) -> int | None:
        if self.inverse_relations == "shared":
            return self.index.get(label)
        return self.index.get(INVERSE_PREFIX + label)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "inverse_relations": self.inverse_relations}

    @classmethod
    def from_dict(cls, obj: dict) -> "RelationVocabulary":
        return cls(list(obj["labels"]), obj.get("inverse_relations", "distinct"))


def build_relation_vocab(corpus: Iterable[SentenceRecord], inverse_relations: str = "distinct",
                         reserve_unknown: bool = False) -> RelationVocabulary:
    """Index ``self``, the sorted observed arc labels, then their ``inv:`` twins.

    Labels on root tokens (head 0) never label an arc and are not indexed.
    With ``reserve_unknown`` an ``unk_rel`` type is appended for labels that
    first appear at prediction time.
    """
    if inverse_relations not in ("distinct", "shared"):
        raise GraphError(f"inverse_relations must be 'distinct' or 'shared', got {inverse_relations!r}")
    observed = set()
    empty = True
    for rec in corpus:
        empty = False
        for head, rel in zip(rec.heads, rec.deprels):
            if not rel:
                raise GraphError("empty relation label")
            if head != 0:
                observed.add(rel)
    if empty:
        raise GraphError("cannot build a relation vocabulary from an empty corpus")
    forward = sorted(observed - {SELF, UNK_REL})
    labels = [SELF] + forward
    if inverse_relations == "distinct":
        labels += [INVERSE_PREFIX + lab for lab in forward]
    if reserve_unknown:
        labels.append(UNK_REL)
    return RelationVocabulary(labels, inverse_relations)


@dataclass
class DependencyGraph:
    """Symmetric self-looped adjacency ``A`` and relation indicators ``Q``.

    ``Q`` maps an ordered token pair to the tuple of relation indices on it,
    in arc order; ``edges`` flattens it to ``(i, j, k)`` triples.
    """

    n: int
    A: np.ndarray
    Q: dict[tuple[int, int], tuple[int, ...]]
    num_relations: int
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        triples = [(i, j, k) for (i, j) in sorted(self.Q) for k in self.Q[(i, j)]]
        self.edges = np.array(triples, dtype=np.int64).reshape(-1, 3)

    def dense_q(self) -> np.ndarray:
        q = np.zeros((self.n, self.n, self.num_relations), dtype=np.int64)
        for (i, j), ks in self.Q.items():
            for k in ks:
                q[i, j, k] += 1
        return q

    def permuted(self, perm: np.ndarray) -> "DependencyGraph":
        """Same graph with relation index ``k`` renamed to ``perm[k]``."""
        q = {pair: tuple(int(perm[k]) for k in ks) for pair, ks in self.Q.items()}
        return DependencyGraph(self.n, self.A.copy(), q, self.num_relations)


def build_graph(record: SentenceRecord, relvocab: RelationVocabulary) -> DependencyGraph:
    n = len(record.tokens)
    A = np.eye(n, dtype=np.int64)
    Q: dict[tuple[int, int], list[int]] = {(i, i): [relvocab.index[SELF]] for i in range(n)}
    unknown = set()
    for i, (head, rel) in enumerate(zip(record.heads, record.deprels)):
        if head == 0:
            continue
        h = head - 1
        if not 0 <= h < n or h == i:
            raise GraphError(f"invalid head {head} for token {i + 1}")
        fwd, inv = relvocab.forward(rel), relvocab.inverse(rel)
        if fwd is None or inv is None:
            if relvocab.unk_index is None:
                raise GraphError(f"relation {rel!r} not in vocabulary and no unk_rel reserved")
            unknown.add(rel)
            fwd = inv = relvocab.unk_index
        A[i, h] = A[h, i] = 1
        Q.setdefault((i, h), []).append(fwd)
        Q.setdefault((h, i), []).append(inv)
    if unknown:
        warnings.warn(f"unknown relation labels mapped to {UNK_REL}: {sorted(unknown)}", stacklevel=2)
    return DependencyGraph(n, A, {k: tuple(v) for k, v in Q.items()}, len(relvocab))
