"""Small synthetic corpora with hand-built parses.

SemEval data cannot be redistributed, so tests and the verification
commands run on these. Polarity is fully determined by the opinion word,
which keeps the corpus consistent enough to memorise.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .corpus import AE_TAGS, AS_TAGS, SentenceRecord, load_dataset

POLARITY = {
    "great": "pos", "excellent": "pos", "fast": "pos", "love": "pos",
    "terrible": "neg", "slow": "neg", "awful": "neg", "hate": "neg",
    "average": "neu", "okay": "neu",
}


def _rec(words, heads, rels, ae, sentiments):
    return SentenceRecord(words, ae, sentiments, heads, rels)


def copula(aspect: list[str], opinion: str) -> SentenceRecord:
    """``the <aspect> is <opinion>``"""
    k = len(aspect)
    head = 1 + k  # last aspect token, 1-based
    op = k + 3
    words = ["the", *aspect, "is", opinion]
    heads = [head] + [head] * (k - 1) + [op] + [op, 0]
    rels = ["det"] + ["compound"] * (k - 1) + ["nsubj", "cop", "root"]
    ae = ["O", "BA"] + ["IA"] * (k - 1) + ["O", "BP"]
    pol = POLARITY[opinion]
    sent = ["NONE"] + [pol] * k + ["NONE", "NONE"]
    return _rec(words, heads, rels, ae, sent)


def modifier(opinion: str, aspect: str) -> SentenceRecord:
    """``<opinion> <aspect>``"""
    return _rec([opinion, aspect], [2, 0], ["amod", "root"], ["BP", "BA"], ["NONE", POLARITY[opinion]])


def verbal(verb: str, aspect: str) -> SentenceRecord:
    """``i <verb> the <aspect>``"""
    return _rec(["i", verb, "the", aspect], [2, 0, 4, 2], ["nsubj", "root", "det", "obj"],
                ["O", "BP", "O", "BA"], ["NONE", "NONE", "NONE", POLARITY[verb]])


def contrast(a1: str, o1: str, a2: str, o2: str) -> SentenceRecord:
    """``the <a1> is <o1> but the <a2> is <o2>``"""
    words = ["the", a1, "is", o1, "but", "the", a2, "is", o2]
    heads = [2, 4, 4, 0, 9, 7, 9, 9, 4]
    rels = ["det", "nsubj", "cop", "root", "cc", "det", "nsubj", "cop", "conj"]
    ae = ["O", "BA", "O", "BP", "O", "O", "BA", "O", "BP"]
    sent = ["NONE", POLARITY[o1], "NONE", "NONE", "NONE", "NONE", POLARITY[o2], "NONE", "NONE"]
    return _rec(words, heads, rels, ae, sent)


def plain(words: list[str], heads: list[int], rels: list[str]) -> SentenceRecord:
    n = len(words)
    return _rec(words, heads, rels, ["O"] * n, ["NONE"] * n)


def synthetic_corpus() -> list[SentenceRecord]:
    """The 20-sentence memorisation corpus."""
    return [
        copula(["battery"], "great"),
        copula(["screen"], "terrible"),
        copula(["keyboard"], "average"),
        copula(["battery", "life"], "excellent"),
        copula(["customer", "service"], "awful"),
        copula(["price"], "okay"),
        copula(["food"], "slow"),
        modifier("fast", "delivery"),
        modifier("awful", "screen"),
        modifier("great", "food"),
        modifier("average", "price"),
        verbal("love", "keyboard"),
        verbal("hate", "service"),
        verbal("love", "food"),
        contrast("screen", "great", "battery", "slow"),
        contrast("food", "terrible", "price", "excellent"),
        contrast("keyboard", "okay", "service", "fast"),
        plain(["it", "arrived", "yesterday"], [2, 0, 2], ["nsubj", "root", "obl"]),
        plain(["i", "bought", "it"], [2, 0, 2], ["nsubj", "root", "obj"]),
        plain(["thanks"], [0], ["root"]),
    ]


def gradcheck_fixture() -> list[SentenceRecord]:
    """Two short sentences covering multi-token aspects and a one-token-free opinion."""
    return [
        copula(["battery", "life"], "great"),
        verbal("hate", "screen"),
    ]


def bundled(name: str) -> list[SentenceRecord]:
    """Load ``synthetic20.jsonl`` or ``gradcheck2.jsonl`` shipped with the package."""
    with resources.as_file(resources.files("sdein") / "data" / name) as path:
        return load_dataset(path)


def random_record(rng: np.random.Generator, max_len: int = 12, labels=("nsubj", "amod", "det", "obj", "conj"),
                  tagged: bool = True) -> SentenceRecord:
    """A random tree with random (valid) BIO tags."""
    n = int(rng.integers(1, max_len + 1))
    root = int(rng.integers(0, n))
    order = [root] + [i for i in rng.permutation(n) if i != root]
    heads = [0] * n
    for pos, node in enumerate(order[1:], start=1):
        heads[node] = int(order[rng.integers(0, pos)]) + 1
    rels = ["root" if h == 0 else str(rng.choice(labels)) for h in heads]
    words = [f"w{int(rng.integers(0, 30))}" for _ in range(n)]
    if not tagged:
        return SentenceRecord(words, None, None, heads, rels)
    ae, sent = random_tags(rng, n)
    return SentenceRecord(words, ae, sent, heads, rels)


def random_tags(rng: np.random.Generator, n: int) -> tuple[list[str], list[str]]:
    """Valid BIO tags with per-span sentiment."""
    ae, sent = [], []
    pol = None
    for i in range(n):
        prev = ae[-1] if ae else "O"
        choices = ["BA", "BP", "O", "O"]
        if prev in ("BA", "IA"):
            choices.append("IA")
        if prev in ("BP", "IP"):
            choices.append("IP")
        tag = str(rng.choice(choices))
        if tag == "BA":
            pol = str(rng.choice(AS_TAGS))
        ae.append(tag)
        sent.append(pol if tag in ("BA", "IA") else "NONE")
    assert all(t in AE_TAGS for t in ae)
    return ae, sent
