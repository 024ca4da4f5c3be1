"""Span prediction and scoring.

Turns per-token start/end probabilities into answer spans, measures model
uncertainty as mean start/end entropy, and wraps the two scorer backends
(the trainable baseline and external wire-protocol processes) behind one
interface the simulator and the selection strategies share.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .baseline import BaselineModel, Featurizer, TrainConfig, train_baseline
from .corpus import ContextDoc, Sample, truncate_question


class ScorerError(Exception):
    """A scorer backend failed or broke its contract."""


@dataclass(frozen=True)
class SpanPrediction:
    start_probs: np.ndarray
    end_probs: np.ndarray
    best_span: tuple[int, int]
    answer_text: str

    def __post_init__(self):
        n = self.start_probs.size
        if self.end_probs.size != n or n == 0:
            raise ValueError("start/end probability vectors must share a nonzero length")
        s, e = self.best_span
        if not (0 <= s <= e < n):
            raise ValueError(f"best_span {self.best_span} outside [0, {n})")


@dataclass(frozen=True)
class PredictionPair:
    """Predictions for the same sample from the full and truncated question."""
    full: SpanPrediction
    truncated: SpanPrediction


def softmax(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-d array")
    offsets = np.array([0, scores.size], dtype=np.int64)
    return kernels.segment_softmax(scores, offsets)


def _check_prob_vector(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{what} must be a non-empty 1-d array")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{what} must contain finite non-negative entries")
    return p


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats of a distribution summing to 1 within 1e-6."""
    p = _check_prob_vector(probs, "probs")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("probs must sum to 1 within 1e-6")
    offsets = np.array([0, p.size], dtype=np.int64)
    return float(kernels.segment_entropy(p, offsets)[0])


def uncertainty(pred: SpanPrediction) -> float:
    """Mean of the start and end distribution entropies."""
    return 0.5 * (entropy(pred.start_probs) + entropy(pred.end_probs))


def decode_best_span(start_probs: np.ndarray, end_probs: np.ndarray,
                     max_span_len: int = 30) -> tuple[int, int]:
    """Most probable admissible span: argmax of start_probs[s] * end_probs[e]
    over s <= e < s + max_span_len. Ties resolve to the smaller s, then the
    smaller e."""
    sp = _check_prob_vector(start_probs, "start_probs")
    ep = _check_prob_vector(end_probs, "end_probs")
    if sp.size != ep.size:
        raise ValueError("start_probs and end_probs must have the same length")
    if max_span_len < 1:
        raise ValueError("max_span_len must be >= 1")
    offsets = np.array([0, sp.size], dtype=np.int64)
    starts, ends = kernels.decode_spans(sp, ep, offsets, max_span_len)
    return int(starts[0]), int(ends[0])


def make_prediction(doc: ContextDoc, start_probs: np.ndarray, end_probs: np.ndarray,
                    max_span_len: int = 30) -> SpanPrediction:
    """Decode probabilities against a document and recover the answer text."""
    if len(doc.tokens) != start_probs.size:
        raise ScorerError(
            f"probability vectors of length {start_probs.size} do not match "
            f"{len(doc.tokens)} tokens in context {doc.doc_id!r}"
        )
    s, e = decode_best_span(start_probs, end_probs, max_span_len)
    text = doc.text[doc.tokens[s].char_start: doc.tokens[e].char_end]
    return SpanPrediction(start_probs=start_probs, end_probs=end_probs,
                          best_span=(s, e), answer_text=text)


class BaselineScorer:
    """Scorer over the trainable baseline model.

    Feature matrices are cached per (sample, question variant), so repeated
    retraining and pool scoring over the same datasets only pays the matrix
    products.
    """

    kind = "baseline"

    def __init__(self, train_config: TrainConfig | None = None, model: BaselineModel | None = None):
        self.train_config = train_config or TrainConfig()
        self.model = model
        self._featurizer: Featurizer | None = model.featurizer() if model else None
        self._fit_contexts_key: int | None = None
        self._feature_cache: dict[tuple[int, str], tuple[Sample, np.ndarray]] = {}

    # -- internals ---------------------------------------------------------

    def _ensure_featurizer(self, contexts: Mapping[str, ContextDoc]) -> Featurizer:
        if self._featurizer is None or self._fit_contexts_key != id(contexts):
            if self.model is not None and self._featurizer is not None:
                # a preloaded model keeps its own idf table
                return self._featurizer
            self._featurizer = Featurizer.fit(contexts, window=self.train_config.window)
            self._fit_contexts_key = id(contexts)
            self._feature_cache.clear()
        return self._featurizer

    def _features_for(self, sample: Sample, doc: ContextDoc, variant: str) -> np.ndarray:
        key = (id(sample), variant)
        hit = self._feature_cache.get(key)
        if hit is not None and hit[0] is sample:
            return hit[1]
        question = sample.question if variant == "full" else truncate_question(sample.question)
        X = self._featurizer.features(question, doc)
        self._feature_cache[key] = (sample, X)
        return X

    def _require_model(self) -> BaselineModel:
        if self.model is None:
            raise ScorerError("baseline scorer has no trained model yet")
        return self.model

    def _predict_packed(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc],
                        variant: str) -> list[SpanPrediction]:
        model = self._require_model()
        if self._featurizer is None:
            self._featurizer = model.featurizer()
        matrices = []
        docs = []
        for s in samples:
            doc = contexts[s.doc_id]
            if not doc.tokens:
                raise ScorerError(f"context {doc.doc_id!r} has no tokens")
            docs.append(doc)
            matrices.append(self._features_for(s, doc, variant))
        from .baseline import pack_matrices

        X, offsets = pack_matrices(matrices)
        start_probs = kernels.segment_softmax(X @ model.start_weights, offsets)
        end_probs = kernels.segment_softmax(X @ model.end_weights, offsets)
        cap = model.feature_config.max_span_len
        starts, ends = kernels.decode_spans(start_probs, end_probs, offsets, cap)
        preds = []
        for i, doc in enumerate(docs):
            a, b = offsets[i], offsets[i + 1]
            s, e = int(starts[i]), int(ends[i])
            text = doc.text[doc.tokens[s].char_start: doc.tokens[e].char_end]
            preds.append(SpanPrediction(
                start_probs=start_probs[a:b].copy(),
                end_probs=end_probs[a:b].copy(),
                best_span=(s, e),
                answer_text=text,
            ))
        return preds

    # -- scorer interface ----------------------------------------------------

    def retrain(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc], seed: int = 0) -> None:
        """Train from scratch on the given samples."""
        featurizer = self._ensure_featurizer(contexts)
        matrices = [self._features_for(s, contexts[s.doc_id], "full") for s in samples]
        cfg = TrainConfig(
            epochs=self.train_config.epochs,
            learning_rate=self.train_config.learning_rate,
            window=self.train_config.window,
            max_span_len=self.train_config.max_span_len,
            seed=seed,
        )
        self.model = train_baseline(samples, contexts, cfg, featurizer=featurizer,
                                    feature_matrices=matrices)

    def predict(self, question: str, doc: ContextDoc) -> SpanPrediction:
        model = self._require_model()
        if self._featurizer is None:
            self._featurizer = model.featurizer()
        if not doc.tokens:
            raise ScorerError(f"context {doc.doc_id!r} has no tokens")
        X = self._featurizer.features(question, doc)
        start_probs = softmax(X @ model.start_weights)
        end_probs = softmax(X @ model.end_weights)
        return make_prediction(doc, start_probs, end_probs, model.feature_config.max_span_len)

    def predict_batch(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> dict[str, SpanPrediction]:
        if not samples:
            return {}
        preds = self._predict_packed(samples, contexts, "full")
        return {s.sample_id: p for s, p in zip(samples, preds)}

    def score_pool(self, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> dict[str, PredictionPair]:
        if not samples:
            return {}
        full = self._predict_packed(samples, contexts, "full")
        truncated = self._predict_packed(samples, contexts, "truncated")
        return {
            s.sample_id: PredictionPair(full=f, truncated=t)
            for s, f, t in zip(samples, full, truncated)
        }

    def close(self) -> None:
        pass


@dataclass
class ScorerHandle:
    """Description of a scorer backend; create() builds a live instance."""

    kind: str = "baseline"
    train_config: TrainConfig = field(default_factory=TrainConfig)
    model_path: str | None = None
    command: tuple[str, ...] = ()
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("baseline", "external"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external scorer needs a command")
        if self.kind == "baseline" and self.command:
            raise ValueError("baseline scorer takes no command")

    def create(self):
        if self.kind == "baseline":
            model = BaselineModel.load(self.model_path) if self.model_path else None
            return BaselineScorer(train_config=self.train_config, model=model)
        from .external import ExternalScorer

        scorer = ExternalScorer(self.command, timeout=self.timeout,
                                max_span_len=self.train_config.max_span_len)
        scorer.start()
        return scorer


def predict(scorer, question: str, doc: ContextDoc) -> SpanPrediction:
    """Predict a span for one question against one context document."""
    return scorer.predict(question, doc)


def score_pool(scorer, samples: Sequence[Sample], contexts: Mapping[str, ContextDoc]) -> dict[str, PredictionPair]:
    """Predictions for every sample under both the full and the truncated
    question, keyed by sample id. Pure per sample, so ordering of the input
    does not change any individual result."""
    return scorer.score_pool(samples, contexts)
