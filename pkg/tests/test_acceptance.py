"""Acceptance criteria, one test each; results are echoed in the terminal summary."""
import os
import time
import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from sdein.corpus import AS_TAGS, SentenceRecord, load_dataset
from sdein.evaluation import METRIC_KEYS, score
from sdein.graph import build_graph, build_relation_vocab
from sdein.inference import evaluate_records, prepare
from sdein.model import ABLATIONS, ModelConfig, forward
from sdein.synthetic import random_record, random_tags
from sdein.training import TrainConfig, build_state, dev_loss, fit, mean_metrics, sentence_loss, split_dev
from sdein.verify import GRADCHECK_TOLERANCE, run_gradcheck

from oracles import brute_force_metrics


def test_gradient_correctness(acceptance_report):
    report = run_gradcheck()
    worst = max(report.errors, key=report.errors.get)
    ok = report.max_error < GRADCHECK_TOLERANCE and report.seconds < 60
    acceptance_report("gradient correctness", ok,
                      f"max rel. error {report.max_error:.2e} ({worst}) over {len(report.errors)} tensors "
                      f"in {report.seconds:.1f}s")
    assert all(err < GRADCHECK_TOLERANCE for err in report.errors.values())
    assert report.seconds < 60


def test_memorization(acceptance_report, synthetic):
    start = time.perf_counter()
    _, log = fit(synthetic, synthetic, ModelConfig(),
                 TrainConfig(max_epochs=200, patience=200, stop_at_perfect=True))
    seconds = time.perf_counter() - start
    best = max(e["best_dev_f1_i"] for e in log)
    ok = best == 1.0 and seconds < 300
    acceptance_report("memorization", ok, f"F1-I {best:.3f} after {len(log)} epochs in {seconds:.1f}s")
    assert best == 1.0 and seconds < 300


def test_metric_oracle(acceptance_report):
    rng = np.random.default_rng(561)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        g_ae, g_sent = random_tags(rng, n)
        if rng.random() < 0.3:
            p_ae = list(g_ae)
        else:
            p_ae = [str(t) for t in rng.choice(["BA", "IA", "BP", "IP", "O"], size=n)]
        p_pol = [str(p) for p in rng.choice(AS_TAGS, size=n)]
        got = score([SimpleNamespace(ae_tags=p_ae, as_tags=p_pol)], [SimpleNamespace(ae_tags=g_ae, as_tags=g_sent)])
        want = brute_force_metrics([(p_ae, p_pol)], [(g_ae, g_sent)])
        mismatches += any(got[k] != want[k] for k in METRIC_KEYS)
    acceptance_report("metric oracle", mismatches == 0, f"{200 - mismatches}/200 pairs agree exactly")
    assert mismatches == 0


def test_probability_invariants(acceptance_report):
    rng = np.random.default_rng(562)
    records = [random_record(rng) for _ in range(100)]
    state = build_state(records, ModelConfig(), seed=3)
    worst_row = worst_diag = 0.0
    for rec in records:
        enc, graph = prepare(state, rec)
        trace = forward(state, enc, graph)
        for y in trace.y_ae + trace.y_as:
            worst_row = max(worst_row, float(np.abs(y.data.astype(np.float64).sum(axis=1) - 1).max()))
        if rec.n >= 2:
            for m in trace.attention:
                worst_row = max(worst_row, float(np.abs(m.data.astype(np.float64).sum(axis=1) - 1).max()))
                worst_diag = max(worst_diag, float(np.abs(np.diag(m.data)).max()))
    ok = worst_row <= 1e-6 and worst_diag == 0.0
    acceptance_report("probability invariants", ok,
                      f"max |row sum - 1| {worst_row:.1e}, max |diag M| {worst_diag:.1e} on 100 inputs")
    assert ok


def aspect_free(rng):
    rec = random_record(rng)
    ae = ["BP" if t in ("BA", "BP") else "IP" if t in ("IA", "IP") else "O" for t in rec.ae_tags]
    return SentenceRecord(rec.tokens, ae, ["NONE"] * rec.n, rec.heads, rec.deprels)


def test_masking(acceptance_report):
    rng = np.random.default_rng(565)
    records = [aspect_free(rng) for _ in range(10)]
    cfg = ModelConfig(hidden_size=16, relation_size=4, general_dim=8, domain_dim=4, precision="verification")
    state = build_state(records, cfg, seed=5)
    violations = 0
    for rec in records:
        enc, graph = prepare(state, rec)
        state.zero_grad()
        trace = forward(state, enc, graph, rng=np.random.default_rng(0))
        part = sentence_loss(trace, enc.ae, enc.sentiment, enc.aspect_mask)
        part.as_.backward()
        grads_zero = all(p.grad is None or not np.any(p.grad) for p in state.params.values())
        violations += float(part.as_.data) != 0.0 or not grads_zero
    acceptance_report("masking", violations == 0, f"{10 - violations}/10 aspect-free sentences give zero AS loss and gradient")
    assert violations == 0


def test_relation_symmetry(acceptance_report, fixture2):
    state = build_state(fixture2, ModelConfig(), seed=566)
    rng = np.random.default_rng(566)
    num = len(state.relations)
    diffs = 0
    for _ in range(5):
        perm = rng.permutation(num)
        swapped = state.copy()
        table = state.params["relations"].data
        moved = np.empty_like(table)
        moved[perm] = table
        swapped.params["relations"].data[...] = moved
        for rec in fixture2:
            enc, graph = prepare(state, rec)
            a = forward(state, enc, graph)
            b = forward(swapped, enc, graph.permuted(perm))
            for name in ("h_s", "h_ae", "h_as", "y_ae", "y_as", "attention", "context"):
                for x, y in zip(getattr(a, name), getattr(b, name)):
                    if x is not None and not np.array_equal(x.data, y.data):
                        diffs += 1
    acceptance_report("relation symmetry", diffs == 0, f"{diffs} differing outputs across 5 permutations")
    assert diffs == 0


def test_adjacency_contract(acceptance_report):
    rng = np.random.default_rng(567)
    bad = 0
    for _ in range(100):
        rec = random_record(rng, tagged=False)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            g = build_graph(rec, build_relation_vocab([rec]))
        A = g.A
        ok = np.array_equal(A, A.T) and np.all(np.diag(A) == 1) and all(A[i, j] == 1 for (i, j) in g.Q)
        bad += not ok
    acceptance_report("adjacency contract", bad == 0, f"{100 - bad}/100 random parses satisfy the contract")
    assert bad == 0


def test_ablation_machinery(acceptance_report, synthetic):
    train, dev = split_dev(synthetic, 0.2, seed=1)
    final_dev_loss, selected_dev_loss = {}, {}
    for row in sorted(ABLATIONS):
        epochs = 50 if row in (4, 5) else 3
        best, log = fit(train, dev, ModelConfig.ablation(row), TrainConfig(max_epochs=epochs, patience=epochs))
        assert len(log) == epochs
        final_dev_loss[row] = log[-1]["dev_loss"]
        selected_dev_loss[row] = dev_loss(best, [prepare(best, r) for r in dev])
    ok = final_dev_loss[5] <= final_dev_loss[4]
    # the F1-I-selected checkpoint is reported for context only; the criterion reads epoch 50
    acceptance_report("ablation machinery", ok,
                      f"rows 0-5 trained; dev loss at epoch 50: representations {final_dev_loss[5]:.4f} "
                      f"vs predictions {final_dev_loss[4]:.4f} (selected checkpoints: "
                      f"{selected_dev_loss[5]:.4f} vs {selected_dev_loss[4]:.4f})")
    assert ok


LAPTOP_ENV = ("SDEIN_LAPTOP14_TRAIN", "SDEIN_LAPTOP14_TEST", "SDEIN_GENERAL_EMB", "SDEIN_DOMAIN_EMB")


@pytest.mark.slow
@pytest.mark.skipif(not all(os.environ.get(k) for k in LAPTOP_ENV),
                    reason="needs converted Laptop14 data and embeddings (" + ", ".join(LAPTOP_ENV) + ")")
def test_laptop_benchmark(acceptance_report):
    train = load_dataset(os.environ["SDEIN_LAPTOP14_TRAIN"])
    test = load_dataset(os.environ["SDEIN_LAPTOP14_TEST"])
    reports = []
    for seed in range(1, 6):
        state, _ = fit(train, None, ModelConfig(), TrainConfig(seed=seed),
                       general_path=os.environ["SDEIN_GENERAL_EMB"], domain_path=os.environ["SDEIN_DOMAIN_EMB"])
        reports.append(evaluate_records(state, test))
    f1_i = 100 * mean_metrics(reports)["f1_i"]
    # informational: parser and embedding provenance differ from the reference setup
    acceptance_report("laptop benchmark (informational)", abs(f1_i - 61.60) <= 3.0,
                      f"5-seed mean F1-I {f1_i:.2f} vs reference 61.60 +/- 3.0")
