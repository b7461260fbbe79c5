import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdein.corpus import SentenceRecord
from sdein.graph import GraphError, build_graph, build_relation_vocab
from sdein.synthetic import random_record


def rec(heads, rels, tokens=None):
    tokens = tokens or [f"t{i}" for i in range(len(heads))]
    return SentenceRecord(tokens, None, None, heads, rels)


def test_relation_vocab_counts():
    vocab = build_relation_vocab([rec([2, 0], ["nsubj", "root"]), rec([0, 1], ["root", "amod"])])
    assert len(vocab) == 5
    assert vocab.labels == ["self", "amod", "nsubj", "inv:amod", "inv:nsubj"]


def test_relation_vocab_single_label():
    assert len(build_relation_vocab([rec([0, 1, 1], ["root", "det", "det"])])) == 3


def test_relation_vocab_shared_inverse_and_unknown():
    vocab = build_relation_vocab([rec([0, 1], ["root", "det"])], inverse_relations="shared", reserve_unknown=True)
    assert vocab.labels == ["self", "det", "unk_rel"]
    assert vocab.inverse("det") == vocab.forward("det")


def test_relation_vocab_errors():
    with pytest.raises(GraphError, match="empty"):
        build_relation_vocab([rec([0, 1], ["root", ""])])
    with pytest.raises(GraphError, match="empty corpus"):
        build_relation_vocab([])


def test_adjacency_example():
    r = rec([2, 0, 2], ["amod", "root", "nsubj"])
    g = build_graph(r, build_relation_vocab([r]))
    assert g.A.tolist() == [[1, 1, 0], [1, 1, 1], [0, 1, 1]]


def test_single_token_graph():
    r = rec([0], ["root"])
    vocab = build_relation_vocab([r])
    g = build_graph(r, vocab)
    assert g.A.tolist() == [[1]]
    assert g.Q == {(0, 0): (vocab.index["self"],)}


def test_relation_indicators_example():
    r = rec([2, 0, 2], ["amod", "root", "nsubj"])
    v = build_relation_vocab([r])
    g = build_graph(r, v)
    idx = v.index
    assert g.Q[(0, 1)] == (idx["amod"],)
    assert g.Q[(1, 0)] == (idx["inv:amod"],)
    assert g.Q[(1, 2)] == (idx["inv:nsubj"],)
    assert g.Q[(2, 1)] == (idx["nsubj"],)
    assert (0, 2) not in g.Q
    assert all(g.Q[(i, i)] == (idx["self"],) for i in range(3))


def test_unknown_relation_maps_to_unk_rel():
    train = rec([0, 1], ["root", "amod"])
    vocab = build_relation_vocab([train], reserve_unknown=True)
    with pytest.warns(UserWarning, match="nmod"):
        g = build_graph(rec([0, 1], ["root", "nmod"]), vocab)
    assert g.Q[(1, 0)] == (vocab.unk_index,)
    strict = build_relation_vocab([train])
    with pytest.raises(GraphError):
        build_graph(rec([0, 1], ["root", "nmod"]), strict)


def test_shared_inverse_uses_forward_label():
    r = rec([2, 0], ["amod", "root"])
    v = build_relation_vocab([r], inverse_relations="shared")
    g = build_graph(r, v)
    assert g.Q[(0, 1)] == g.Q[(1, 0)] == (v.index["amod"],)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_graph_contract_random(seed):
    r = random_record(np.random.default_rng(seed), tagged=False)
    vocab = build_relation_vocab([r])
    g = build_graph(r, vocab)
    A = g.A
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 1)
    for (i, j), ks in g.Q.items():
        assert ks and A[i, j] == 1
    assert {pair for pair in g.Q} == {tuple(p) for p in np.argwhere(A == 1)}
    degree = A.sum(axis=1)
    arcs = np.zeros(r.n, dtype=int)
    for i, h in enumerate(r.heads):
        if h:
            arcs[i] += 1
            arcs[h - 1] += 1
    assert np.all(degree >= 1) and np.all(degree <= 1 + arcs)
    again = build_graph(r, vocab)
    assert np.array_equal(again.A, A) and again.Q == g.Q and np.array_equal(again.edges, g.edges)
