"""Shared test helpers: tiny hand-built datasets and a deterministic stub scorer.

The stub scorer lets simulation tests run without the cost of real training:
it "knows" a stable, per-sample spill fraction and answers a question
correctly once the labeled share of the pool reaches it, so learning curves
are fast, deterministic, and monotone.
"""
from __future__ import annotations

import hashlib

import numpy as np
import pytest

from qaplan.corpus import AnswerSpan, ContextDoc, Dataset, Sample, tokenize
from qaplan.scorer import PredictionPair, SpanPrediction


# --------------------------------------------------------------- dataset kit

def make_doc(doc_id: str, text: str) -> ContextDoc:
    return ContextDoc(doc_id=doc_id, text=text, tokens=tokenize(text))


def span_for(doc: ContextDoc, text: str, occurrence: int = 0) -> AnswerSpan:
    """Aligned gold span for the nth occurrence of text in the document."""
    start = -1
    for _ in range(occurrence + 1):
        start = doc.text.index(text, start + 1)
    end = start + len(text)
    hits = [i for i, t in enumerate(doc.tokens) if t.char_end > start and t.char_start < end]
    return AnswerSpan(text=text, char_start=start, token_start=hits[0], token_end=hits[-1])


def make_dataset(name, entries, role="train") -> Dataset:
    """entries: [(doc_id, context_text, [(sample_id, question, answer_text), ...]), ...]"""
    contexts = {}
    samples = []
    for doc_id, text, qas in entries:
        doc = make_doc(doc_id, text)
        contexts[doc_id] = doc
        for sid, question, answer_text in qas:
            samples.append(Sample(sample_id=sid, question=question, doc_id=doc_id,
                                  gold_answers=(span_for(doc, answer_text),)))
    return Dataset(name=name, contexts=contexts, samples=tuple(samples), role=role)


@pytest.fixture
def tiny_dataset() -> Dataset:
    return make_dataset("tiny", [
        ("d1", "The red barn stood near the old mill .", [
            ("q1", "what stood near the mill ?", "barn"),
            ("q2", "where did the barn stand ?", "near the old mill"),
        ]),
        ("d2", "A ship sailed past the rocky cove at dawn .", [
            ("q3", "what sailed past the cove ?", "ship"),
            ("q4", "when did the ship sail ?", "dawn"),
        ]),
        ("d3", "Merchants traded silver coins for woven cloth .", [
            ("q5", "what did merchants trade ?", "silver coins"),
        ]),
    ])


# ---------------------------------------------------------------- stub scorer

def stable_unit(s: str) -> float:
    """Deterministic value in [0, 1) derived from a string."""
    h = hashlib.sha256(s.encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2.0 ** 64


def _smoothed_onehot(n: int, idx: int, peak: float) -> np.ndarray:
    out = np.full(n, (1.0 - peak) / (n - 1)) if n > 1 else np.array([1.0])
    if n > 1:
        out[idx] = peak
    return out


class StubScorer:
    """Deterministic scorer whose accuracy is a function of the labeled share."""

    kind = "stub"

    def __init__(self, pool_size: int):
        self.pool_size = pool_size
        self.frac = 0.0
        self.retrain_calls = 0

    def retrain(self, samples, contexts, seed=0):
        self.frac = len(samples) / self.pool_size
        self.retrain_calls += 1

    def close(self):
        pass

    def _pred(self, sample, doc, learned: bool) -> SpanPrediction:
        gold = sample.gold_answers[0]
        n = len(doc.tokens)
        if learned:
            s, e = gold.token_start, gold.token_end
        else:
            wrong = 0 if gold.token_start != 0 else n - 1
            s = e = wrong
        peak = 0.55 + 0.4 * stable_unit(f"peak:{sample.sample_id}:{self.frac:.6f}")
        text = doc.text[doc.tokens[s].char_start: doc.tokens[e].char_end]
        return SpanPrediction(
            start_probs=_smoothed_onehot(n, s, peak),
            end_probs=_smoothed_onehot(n, e, peak),
            best_span=(s, e),
            answer_text=text,
        )

    def predict_batch(self, samples, contexts):
        return {
            s.sample_id: self._pred(s, contexts[s.doc_id], stable_unit(s.sample_id) <= self.frac)
            for s in samples
        }

    def score_pool(self, samples, contexts):
        out = {}
        for s in samples:
            doc = contexts[s.doc_id]
            out[s.sample_id] = PredictionPair(
                full=self._pred(s, doc, stable_unit(s.sample_id) <= self.frac),
                truncated=self._pred(s, doc, stable_unit(s.sample_id) <= self.frac / 2.0),
            )
        return out


class StubHandle:
    """create()-style factory for StubScorer, like ScorerHandle."""

    def __init__(self, pool_size: int):
        self.pool_size = pool_size

    def create(self) -> StubScorer:
        return StubScorer(self.pool_size)


def grid_dataset(name: str, n_docs: int, q_per_doc: int, role: str = "train") -> Dataset:
    """Regular synthetic dataset: every doc has distinct single-token answers."""
    entries = []
    for d in range(n_docs):
        words = [f"w{d}x{i}" for i in range(q_per_doc + 2)]
        text = " ".join(words) + " ."
        qas = [
            (f"{name}-d{d}-q{i}", f"which token sits at slot {i} ?", words[i + 1])
            for i in range(q_per_doc)
        ]
        entries.append((f"{name}-d{d}", text, qas))
    return make_dataset(name, entries, role=role)
