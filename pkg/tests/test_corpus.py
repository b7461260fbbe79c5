import json
import os
import warnings

import numpy as np
import pytest

from sdein.corpus import (
    AE_TAGS, AS_TAGS, BIOWarning, CorpusError, SentenceRecord, Vocabulary, conllu_to_records,
    decode_sentence, encode_sentence, load_dataset, load_embeddings, validate_bio,
)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


GREAT_PHONE = {"tokens": ["great", "phone"], "ae_tags": ["BP", "BA"], "as_tags": ["NONE", "pos"],
               "heads": [2, 0], "deprels": ["amod", "root"]}


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_dataset(path) == []


def test_minimal_record(tmp_path):
    [rec] = load_dataset(write_lines(tmp_path / "a.jsonl", [GREAT_PHONE]))
    assert rec.heads[0] == 2 and rec.tokens[rec.heads[0] - 1] == "phone"
    assert rec.line == 1


def test_length_mismatch_cites_line(tmp_path):
    bad = dict(GREAT_PHONE, heads=[2])
    path = write_lines(tmp_path / "b.jsonl", [GREAT_PHONE, bad])
    with pytest.raises(CorpusError, match="line 2: length mismatch: heads"):
        load_dataset(path)


def test_malformed_json_cites_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(GREAT_PHONE) + "\n{not json\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_dataset(path)


@pytest.mark.parametrize("change, message", [
    ({"heads": [1, 0]}, "own head"),
    ({"heads": [3, 0]}, "outside"),
    ({"deprels": ["", "root"]}, "empty relation"),
    ({"as_tags": ["NONE", "NONE"]}, "no sentiment"),
    ({"as_tags": ["pos", "pos"]}, "non-aspect token 1"),
    ({"ae_tags": ["IP", "BA"]}, "IP at position 0"),
])
def test_invariant_violations(tmp_path, change, message):
    path = write_lines(tmp_path / "d.jsonl", [dict(GREAT_PHONE, **change)])
    with pytest.raises(CorpusError, match=message):
        load_dataset(path)


def test_conflict_records_are_dropped(tmp_path, caplog):
    conflict = dict(GREAT_PHONE, as_tags=["NONE", "conflict"])
    path = write_lines(tmp_path / "e.jsonl", [GREAT_PHONE, conflict])
    assert len(load_dataset(path)) == 1
    assert "dropped 1" in caplog.text


def test_untagged_records_allowed_when_not_required(tmp_path):
    obj = {k: GREAT_PHONE[k] for k in ("tokens", "heads", "deprels")}
    [rec] = load_dataset(write_lines(tmp_path / "f.jsonl", [obj]), require_tags=False)
    assert not rec.has_tags
    with pytest.raises(CorpusError, match="ae_tags"):
        load_dataset(tmp_path / "f.jsonl")


@pytest.mark.skipif(not os.environ.get("SDEIN_LAPTOP14_TRAIN"), reason="needs SemEval-2014 Laptop train file")
def test_laptop14_train_size():
    assert len(load_dataset(os.environ["SDEIN_LAPTOP14_TRAIN"], drop_unknown_sentiment=False)) == 3048


def test_validate_bio_ok():
    assert validate_bio(["BA", "IA", "O"]) == ["BA", "IA", "O"]


def test_validate_bio_repairs_with_warning():
    with pytest.warns(BIOWarning):
        assert validate_bio(["IA", "O"]) == ["BA", "O"]
    with pytest.warns(BIOWarning):
        assert validate_bio(["O", "IP", "IP"]) == ["O", "BP", "IP"]
    with pytest.warns(BIOWarning):
        assert validate_bio(["BP", "IA"]) == ["BP", "BA"]


def test_validate_bio_strict_and_unknown():
    with pytest.raises(CorpusError):
        validate_bio(["IA"], strict=True)
    with pytest.raises(CorpusError, match="unknown AE tag"):
        validate_bio(["B-ASP"])


def test_embeddings_copy_and_mean(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 1.0 2.0\ndog 3.0 6.0\n")
    vocab = Vocabulary(["<pad>", "<unk>", "cat", "bird"])
    table = load_embeddings(path, vocab)
    np.testing.assert_allclose(table.matrix[2], [1.0, 2.0])
    np.testing.assert_allclose(table.matrix[1], [2.0, 4.0])
    np.testing.assert_allclose(table.matrix[3], [2.0, 4.0])
    np.testing.assert_array_equal(table.matrix[0], 0.0)
    # independent copies, not views of one row
    table.matrix[3, 0] = 99.0
    assert table.matrix[1, 0] == 2.0


def test_embeddings_single_line(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("cat 1.0 2.0\n")
    table = load_embeddings(path, Vocabulary(["<pad>", "<unk>", "cat"]))
    assert table.matrix[2].tolist() == [1.0, 2.0]


def test_embeddings_lowercase_fallback(tmp_path):
    path = tmp_path / "lc.txt"
    path.write_text("screen 0.5 0.5\nother 1.5 1.5\n")
    table = load_embeddings(path, Vocabulary(["<pad>", "<unk>", "Screen"]))
    assert table.matrix[2].tolist() == [0.5, 0.5]


def test_embeddings_dimension_mismatch_names_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("cat 1.0 2.0\ndog 1.0\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_embeddings(path, Vocabulary())


def test_vocab_reserved_and_lowercase():
    vocab = Vocabulary.build([SentenceRecord(["Good", "food"], None, None, [2, 0], ["amod", "root"])])
    assert vocab.itos[:2] == ["<pad>", "<unk>"]
    assert vocab.index("Good") == 2 and vocab.index("FOOD") == 3 and vocab.index("zzz") == 1


@pytest.mark.parametrize("ae, sent, mask", [
    (["BA", "IA", "O"], ["pos", "pos", "NONE"], [1, 1, 0]),
    (["O", "O"], ["NONE", "NONE"], [0, 0]),
    (["BP", "O"], ["NONE", "NONE"], [0, 0]),
])
def test_aspect_mask(ae, sent, mask):
    rec = SentenceRecord(["a"] * len(ae), ae, sent, [0] + [1] * (len(ae) - 1), ["root"] + ["dep"] * (len(ae) - 1))
    enc = encode_sentence(rec, Vocabulary.build([rec]))
    assert enc.aspect_mask.astype(int).tolist() == mask


def test_encode_decode_round_trip(synthetic):
    vocab = Vocabulary.build(synthetic)
    total_mask = total_aspects = 0
    for rec in synthetic:
        enc = encode_sentence(rec, vocab)
        assert decode_sentence(enc, vocab) == (rec.tokens, rec.ae_tags, rec.as_tags)
        total_mask += int(enc.aspect_mask.sum())
        total_aspects += sum(t in ("BA", "IA") for t in rec.ae_tags)
    assert total_mask == total_aspects


def test_loading_is_deterministic(tmp_path, synthetic):
    from sdein.corpus import save_dataset
    path = tmp_path / "s.jsonl"
    save_dataset(synthetic, path)
    a, b = load_dataset(path), load_dataset(path)
    assert a == b
    assert Vocabulary.build(a).itos == Vocabulary.build(b).itos


def test_tag_orders_are_fixed():
    assert AE_TAGS == ("BA", "IA", "BP", "IP", "O")
    assert AS_TAGS == ("pos", "neg", "neu")


def test_conllu_conversion(tmp_path):
    path = tmp_path / "x.conllu"
    rows = [
        "# sent_id = 1",
        "1\tThe\tthe\tDET\t_\t_\t2\tdet\t_\t_",
        "2\tscreen\tscreen\tNOUN\t_\t_\t4\tnsubj\t_\t_",
        "3\tis\tbe\tAUX\t_\t_\t4\tcop\t_\t_",
        "4\tbright\tbright\tADJ\t_\t_\t0\troot\t_\t_",
        "",
        "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_",
        "1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_",
        "2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_",
        "",
    ]
    path.write_text("\n".join(rows) + "\n")
    first, second = conllu_to_records(path)
    assert first.tokens == ["The", "screen", "is", "bright"]
    assert first.heads == [2, 4, 4, 0] and first.deprels == ["det", "nsubj", "cop", "root"]
    assert second.tokens == ["do", "n't"] and not second.has_tags
