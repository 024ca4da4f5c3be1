"""Selection strategies: hand-traced cases plus the batch/worklist plumbing.
The large randomized invariant sweep lives in the acceptance suite."""
import csv

import numpy as np
import pytest

from qaplan.corpus import PoolState
from qaplan.scorer import SpanPrediction, PredictionPair
from qaplan.strategies import (DifficultyLabel, SelectionBatch, StrategySpec,
                               WORKLIST_COLUMNS, classify_difficulty,
                               export_worklist, select_context_roundrobin,
                               select_difficulty, select_per_context_quota,
                               select_random, select_uncertainty, worklist_rows)
from tests.conftest import grid_dataset, make_dataset


def pool_of(ds, labeled=()):
    pool = PoolState.fresh(ds)
    return pool.with_labeled(labeled) if labeled else pool


# ------------------------------------------------------------- StrategySpec

def test_strategy_spec_validation():
    with pytest.raises(ValueError):
        StrategySpec("mystery")
    with pytest.raises(ValueError):
        StrategySpec("random", within_rule="alphabetical")
    with pytest.raises(ValueError):
        StrategySpec("per_context_quota")  # missing quota numbers
    spec = StrategySpec("per_context_quota", questions_per_context=2, n_contexts=3)
    assert spec.describe() == "per_context_quota:random"
    assert StrategySpec("uncertainty").describe() == "uncertainty"
    assert StrategySpec("context_roundrobin", within_rule="uncertainty").describe() == \
        "context_roundrobin:uncertainty"


def test_selection_batch_rejects_duplicates():
    with pytest.raises(ValueError):
        SelectionBatch(("a", "a"), StrategySpec("random"))


# ------------------------------------------------------------------- random

def test_select_random_basics():
    ds = grid_dataset("r", n_docs=3, q_per_doc=4)
    pool = pool_of(ds)
    batch = select_random(pool, 5, seed=1)
    assert len(batch.sample_ids) == 5
    assert len(set(batch.sample_ids)) == 5
    assert set(batch.sample_ids) <= set(pool.unlabeled)
    assert select_random(pool, 5, seed=1).sample_ids == batch.sample_ids  # deterministic
    assert select_random(pool, 5, seed=2).sample_ids != batch.sample_ids
    assert len(select_random(pool, 99, seed=0).sample_ids) == 12
    assert select_random(pool, 0, seed=0).sample_ids == ()
    with pytest.raises(ValueError):
        select_random(pool, -1)


def test_select_random_ignores_labeled():
    ds = grid_dataset("r", n_docs=2, q_per_doc=3)
    labeled = [s.sample_id for s in ds.samples[:3]]
    batch = select_random(pool_of(ds, labeled), 6, seed=0)
    assert set(batch.sample_ids) == {s.sample_id for s in ds.samples[3:]}


# -------------------------------------------------------------- uncertainty

def test_select_uncertainty_orders_by_score_then_id():
    ds = grid_dataset("u", n_docs=1, q_per_doc=4)
    ids = [s.sample_id for s in ds.samples]  # u-d0-q0..q3
    scores = {ids[0]: 0.3, ids[1]: 0.9, ids[2]: 0.9, ids[3]: 0.1}
    batch = select_uncertainty(pool_of(ds), 3, scores, seed=0)
    assert batch.sample_ids == (ids[1], ids[2], ids[0])
    assert batch.scores == {ids[1]: 0.9, ids[2]: 0.9, ids[0]: 0.3}


def test_select_uncertainty_requires_scores_for_all_unlabeled():
    ds = grid_dataset("u", n_docs=1, q_per_doc=3)
    ids = [s.sample_id for s in ds.samples]
    with pytest.raises(ValueError):
        select_uncertainty(pool_of(ds), 2, {ids[0]: 1.0})


def test_select_uncertainty_skips_labeled():
    ds = grid_dataset("u", n_docs=1, q_per_doc=4)
    ids = [s.sample_id for s in ds.samples]
    scores = {i: 1.0 for i in ids}
    scores[ids[0]] = 99.0
    batch = select_uncertainty(pool_of(ds, [ids[0]]), 2, scores)
    assert ids[0] not in batch.sample_ids


# --------------------------------------------------------------- difficulty

def onehot_pred(n, s, e):
    sp = np.zeros(n)
    ep = np.zeros(n)
    sp[s] = 1.0
    ep[e] = 1.0
    return SpanPrediction(start_probs=sp, end_probs=ep, best_span=(s, e), answer_text="t")


def test_classify_difficulty_by_span_agreement():
    pair_same = PredictionPair(full=onehot_pred(5, 1, 2), truncated=onehot_pred(5, 1, 2))
    assert classify_difficulty("a", pair_same).label == "easy"
    pair_diff = PredictionPair(full=onehot_pred(5, 1, 2), truncated=onehot_pred(5, 0, 0))
    assert classify_difficulty("a", pair_diff).label == "hard"
    mismatched = PredictionPair(full=onehot_pred(5, 1, 2), truncated=onehot_pred(4, 1, 2))
    with pytest.raises(ValueError):
        classify_difficulty("a", mismatched)


def test_difficulty_label_validation():
    with pytest.raises(ValueError):
        DifficultyLabel("x", "medium")


def test_select_difficulty_puts_every_hard_first():
    ds = grid_dataset("h", n_docs=2, q_per_doc=5)
    ids = [s.sample_id for s in ds.samples]
    hard = set(ids[::3])
    labels = {i: DifficultyLabel(i, "hard" if i in hard else "easy") for i in ids}
    batch = select_difficulty(pool_of(ds), 6, labels, seed=4)
    got_hard = [i for i in batch.sample_ids if i in hard]
    got_easy = [i for i in batch.sample_ids if i not in hard]
    assert set(got_hard) == hard  # every hard sample selected before any easy
    assert batch.sample_ids[:len(hard)] == tuple(got_hard)
    assert len(got_easy) == 6 - len(hard)
    with pytest.raises(ValueError):
        select_difficulty(pool_of(ds), 2, {})


def test_select_difficulty_truncates_inside_hard_group():
    ds = grid_dataset("h", n_docs=1, q_per_doc=6)
    ids = [s.sample_id for s in ds.samples]
    labels = {i: DifficultyLabel(i, "hard") for i in ids}
    batch = select_difficulty(pool_of(ds), 2, labels, seed=0)
    assert len(batch.sample_ids) == 2


# ---------------------------------------------------------------- roundrobin

def test_roundrobin_distinct_contexts_when_k_small():
    ds = grid_dataset("rr", n_docs=5, q_per_doc=4)
    batch = select_context_roundrobin(pool_of(ds), 5, ds, seed=2)
    docs = [sid.split("-q")[0] for sid in batch.sample_ids]
    assert len(set(docs)) == 5


def test_roundrobin_serves_least_covered_contexts_first():
    ds = grid_dataset("rr", n_docs=3, q_per_doc=4)
    by_doc = {}
    for s in ds.samples:
        by_doc.setdefault(s.doc_id, []).append(s.sample_id)
    # rr-d0 already has 2 labels, rr-d1 has 1, rr-d2 has 0
    labeled = by_doc["rr-d0"][:2] + by_doc["rr-d1"][:1]
    batch = select_context_roundrobin(pool_of(ds, labeled), 3, ds, seed=0)
    picked_docs = [sid[: sid.index("-q")] for sid in batch.sample_ids]
    # first pick must level up rr-d2 (level 0), then rr-d1, then d0/d2 at level 2... the
    # guarantee under test: coverage levels after the batch differ by at most one
    coverage = {d: sum(1 for x in labeled if x.startswith(d + "-")) for d in by_doc}
    for d in picked_docs:
        coverage[d] += 1
    values = sorted(coverage.values())
    assert values[-1] - values[0] <= 1
    assert picked_docs[0] == "rr-d2"


def test_roundrobin_balances_within_single_batch():
    ds = grid_dataset("rr", n_docs=4, q_per_doc=5)
    batch = select_context_roundrobin(pool_of(ds), 10, ds, seed=7)
    counts = {}
    for sid in batch.sample_ids:
        doc = sid[: sid.index("-q")]
        counts[doc] = counts.get(doc, 0) + 1
    assert sorted(counts.values()) == [2, 2, 3, 3]


def test_roundrobin_skips_exhausted_contexts():
    ds = make_dataset("rr", [
        ("one", "alpha beta gamma", [("a1", "q ?", "beta")]),
        ("two", "delta epsilon zeta", [("b1", "q ?", "delta"), ("b2", "q ?", "zeta")]),
    ])
    batch = select_context_roundrobin(pool_of(ds, ["a1"]), 2, ds, seed=0)
    assert set(batch.sample_ids) == {"b1", "b2"}


def test_roundrobin_within_uncertainty_picks_top_scored_per_context():
    ds = grid_dataset("rr", n_docs=2, q_per_doc=3)
    ids = [s.sample_id for s in ds.samples]
    scores = {sid: float(i) for i, sid in enumerate(ids)}  # later ids score higher
    batch = select_context_roundrobin(pool_of(ds), 2, ds, within_rule="uncertainty",
                                      seed=0, scores=scores)
    assert set(batch.sample_ids) == {ids[2], ids[5]}  # per-doc maxima
    assert batch.scores == {ids[2]: scores[ids[2]], ids[5]: scores[ids[5]]}
    with pytest.raises(ValueError):
        select_context_roundrobin(pool_of(ds), 2, ds, within_rule="uncertainty", seed=0)


def test_roundrobin_random_order_is_stable_across_iterations():
    ds = grid_dataset("rr", n_docs=3, q_per_doc=4)
    first = select_context_roundrobin(pool_of(ds), 3, ds, seed=5)
    pool2 = pool_of(ds, list(first.sample_ids))
    second = select_context_roundrobin(pool2, 3, ds, seed=5)
    assert not set(first.sample_ids) & set(second.sample_ids)
    # replaying both batches from scratch gives the same combined prefix
    replay = select_context_roundrobin(pool_of(ds), 6, ds, seed=5)
    assert replay.sample_ids == first.sample_ids + second.sample_ids


# -------------------------------------------------------------------- quota

def test_quota_prefers_contexts_with_enough_questions():
    ds = make_dataset("q", [
        ("c1", "a1 a2 a3 a4", [("c1-1", "q ?", "a1"), ("c1-2", "q ?", "a2"), ("c1-3", "q ?", "a3")]),
        ("c2", "b1 b2 b3 b4", [("c2-1", "q ?", "b1"), ("c2-2", "q ?", "b2"), ("c2-3", "q ?", "b3")]),
        ("c3", "d1 d2 d3", [("c3-1", "q ?", "d1"), ("c3-2", "q ?", "d2")]),
        ("c4", "e1 e2 e3 e4 e5 e6", [(f"c4-{i}", "q ?", f"e{i}") for i in range(1, 6)]),
    ])
    batch = select_per_context_quota(ds, questions_per_context=3, n_contexts=3, seed=1)
    assert len(batch.sample_ids) == 9
    assert batch.shortfall == 0
    docs = {sid.split("-")[0] for sid in batch.sample_ids}
    assert docs == {"c1", "c2", "c4"}  # c3 has only 2 questions
    per_doc = {d: sum(sid.startswith(d + "-") for sid in batch.sample_ids) for d in docs}
    assert all(v == 3 for v in per_doc.values())


def test_quota_reports_shortfall():
    ds = make_dataset("q", [
        ("c1", "a1 a2 a3 a4", [("c1-1", "q ?", "a1"), ("c1-2", "q ?", "a2"), ("c1-3", "q ?", "a3")]),
        ("c2", "b1 b2 b3", [("c2-1", "q ?", "b1"), ("c2-2", "q ?", "b2")]),
    ])
    batch = select_per_context_quota(ds, questions_per_context=3, n_contexts=3, seed=0)
    # one full context, one partial (2), one missing entirely
    assert len(batch.sample_ids) == 5
    assert batch.shortfall == 4
    with pytest.raises(ValueError):
        select_per_context_quota(ds, questions_per_context=0, n_contexts=1)


def test_quota_is_deterministic_under_seed():
    ds = grid_dataset("q", n_docs=6, q_per_doc=4)
    a = select_per_context_quota(ds, 2, 3, seed=9)
    b = select_per_context_quota(ds, 2, 3, seed=9)
    assert a.sample_ids == b.sample_ids


# ----------------------------------------------------------------- worklist

def test_worklist_rows_and_export(tmp_path):
    ds = grid_dataset("w", n_docs=2, q_per_doc=2)
    ids = [s.sample_id for s in ds.samples]
    scores = {sid: 0.25 * (i + 1) for i, sid in enumerate(ids)}
    batch = select_uncertainty(pool_of(ds), 3, scores, seed=0)
    labels = {sid: DifficultyLabel(sid, "hard") for sid in ids}

    rows = worklist_rows(batch, ds, labels)
    assert [r[0] for r in rows] == ["1", "2", "3"]
    assert rows[0][1] == batch.sample_ids[0]
    assert rows[0][2] == batch.sample_ids[0][: batch.sample_ids[0].index("-q")]
    assert rows[0][3] == "uncertainty"
    assert rows[0][4] == repr(scores[batch.sample_ids[0]])
    assert rows[0][5] == "hard"

    path = tmp_path / "worklist.csv"
    export_worklist(batch, ds, str(path), labels)
    with open(path, newline="", encoding="utf-8") as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0] == list(WORKLIST_COLUMNS)
    assert len(parsed) == 4
    assert parsed[1][1] == batch.sample_ids[0]


def test_worklist_blank_fields_without_scores(tmp_path):
    ds = grid_dataset("w", n_docs=1, q_per_doc=3)
    batch = select_random(pool_of(ds), 2, seed=0)
    rows = worklist_rows(batch, ds)
    for row in rows:
        assert row[4] == "" and row[5] == ""
