"""Trainable span-prediction baseline.

Each context token gets a fixed-length feature vector describing its lexical
relation to the question, and two independent linear softmax heads (answer
start, answer end) are fit by full-batch gradient descent on cross-entropy.
Training starts from zero weights and runs a fixed number of epochs, so a
given sample sequence always produces bit-identical weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import ContextDoc, Sample, tokenize

FEATURE_NAMES = (
    "exact_match",
    "lower_match",
    "window_overlap",
    "idf_overlap",
    "rel_position",
    "token_length",
)
N_FEATURES = len(FEATURE_NAMES)
_LENGTH_CAP = 20.0


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 3
    max_span_len: int = 30
    version: int = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 160
    learning_rate: float = 4.0
    window: int = 3
    max_span_len: int = 30
    seed: int = 0


class _DocIndex:
    __slots__ = ("doc", "exact_positions", "lower_positions", "idf_vec", "rel_pos", "length")

    def __init__(self, doc: ContextDoc, idf_vec, rel_pos, length):
        self.doc = doc
        self.exact_positions: dict[str, list[int]] = {}
        self.lower_positions: dict[str, list[int]] = {}
        for i, tok in enumerate(doc.tokens):
            self.exact_positions.setdefault(tok.text, []).append(i)
            self.lower_positions.setdefault(tok.text.lower(), []).append(i)
        self.idf_vec = idf_vec
        self.rel_pos = rel_pos
        self.length = length


class Featurizer:
    """Per-token lexical features for a (question, context) pair.

    The inverse-document-frequency table comes from the context collection
    the featurizer was fit on; unseen tokens get the maximal (rarest) value.
    Without a fitted table every token is treated as maximally rare, which
    reduces the idf feature to the lowercase-match indicator.
    """

    def __init__(self, idf: Mapping[str, float] | None = None,
                 default_idf: float = 1.0, idf_norm: float = 1.0, window: int = 3):
        if window < 0:
            raise ValueError("window must be >= 0")
        self.idf = dict(idf) if idf else {}
        self.default_idf = default_idf
        self.idf_norm = idf_norm
        self.window = window
        self._doc_cache: dict[int, _DocIndex] = {}
        self._kernel = np.ones(2 * window + 1)

    @classmethod
    def fit(cls, contexts: Mapping[str, ContextDoc], window: int = 3) -> "Featurizer":
        n_docs = len(contexts)
        df: dict[str, int] = {}
        for doc in contexts.values():
            for t in {tok.text.lower() for tok in doc.tokens}:
                df[t] = df.get(t, 0) + 1
        default = math.log(1.0 + n_docs) if n_docs else 1.0
        norm = default if default > 0 else 1.0
        idf = {t: math.log((1.0 + n_docs) / (1.0 + c)) for t, c in df.items()}
        return cls(idf=idf, default_idf=default, idf_norm=norm, window=window)

    def _index(self, doc: ContextDoc) -> _DocIndex:
        cached = self._doc_cache.get(id(doc))
        if cached is not None and cached.doc is doc:
            return cached
        n = len(doc.tokens)
        idf_vec = np.array(
            [self.idf.get(t.text.lower(), self.default_idf) / self.idf_norm for t in doc.tokens],
            dtype=np.float64,
        )
        denom = max(n - 1, 1)
        rel_pos = np.arange(n, dtype=np.float64) / denom
        length = np.array(
            [min(len(t.text), _LENGTH_CAP) / _LENGTH_CAP for t in doc.tokens], dtype=np.float64
        )
        index = _DocIndex(doc, idf_vec, rel_pos, length)
        self._doc_cache[id(doc)] = index
        return index

    def features(self, question: str, doc: ContextDoc) -> np.ndarray:
        """(n_tokens, 6) float64 feature matrix; empty question zeroes the
        match-derived columns."""
        n = len(doc.tokens)
        if n == 0:
            return np.zeros((0, N_FEATURES), dtype=np.float64)
        index = self._index(doc)
        exact = np.zeros(n, dtype=np.float64)
        lower = np.zeros(n, dtype=np.float64)
        q_tokens = [t.text for t in tokenize(question)]
        for word in set(q_tokens):
            for pos in index.exact_positions.get(word, ()):
                exact[pos] = 1.0
        for word in {w.lower() for w in q_tokens}:
            for pos in index.lower_positions.get(word, ()):
                lower[pos] = 1.0
        # mode="same" centres on the longer input, so it returns a
        # kernel-sized array for docs shorter than the kernel; slicing the
        # full convolution keeps the window centred on each doc token.
        window_overlap = np.convolve(lower, self._kernel)[self.window:self.window + n] / self._kernel.size
        idf_overlap = lower * index.idf_vec
        return np.column_stack((exact, lower, window_overlap, idf_overlap, index.rel_pos, index.length))


def featurize(question: str, doc: ContextDoc, window: int = 3) -> np.ndarray:
    """One-off feature matrix without corpus statistics."""
    return Featurizer(window=window).features(question, doc)


@dataclass
class BaselineModel:
    start_weights: np.ndarray
    end_weights: np.ndarray
    feature_config: FeatureConfig
    seed: int
    idf: dict[str, float] = field(default_factory=dict)
    default_idf: float = 1.0
    idf_norm: float = 1.0

    def __post_init__(self):
        self.start_weights = np.asarray(self.start_weights, dtype=np.float64)
        self.end_weights = np.asarray(self.end_weights, dtype=np.float64)
        if self.start_weights.shape != (N_FEATURES,) or self.end_weights.shape != (N_FEATURES,):
            raise ValueError(f"weight vectors must have length {N_FEATURES}")

    def featurizer(self) -> Featurizer:
        return Featurizer(
            idf=self.idf,
            default_idf=self.default_idf,
            idf_norm=self.idf_norm,
            window=self.feature_config.window,
        )

    def save(self, path: str) -> None:
        payload = {
            "format": "qaplan-baseline-v1",
            "start_weights": self.start_weights.tolist(),
            "end_weights": self.end_weights.tolist(),
            "feature_config": {
                "window": self.feature_config.window,
                "max_span_len": self.feature_config.max_span_len,
                "version": self.feature_config.version,
            },
            "seed": self.seed,
            "idf": self.idf,
            "default_idf": self.default_idf,
            "idf_norm": self.idf_norm,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "BaselineModel":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != "qaplan-baseline-v1":
            raise ValueError(f"{path}: not a saved baseline model")
        fc = payload["feature_config"]
        return cls(
            start_weights=np.array(payload["start_weights"], dtype=np.float64),
            end_weights=np.array(payload["end_weights"], dtype=np.float64),
            feature_config=FeatureConfig(window=fc["window"], max_span_len=fc["max_span_len"], version=fc["version"]),
            seed=payload["seed"],
            idf={str(k): float(v) for k, v in payload["idf"].items()},
            default_idf=payload["default_idf"],
            idf_norm=payload["idf_norm"],
        )


def pack_matrices(matrices: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-sample feature matrices; offsets mark the row segments."""
    if not matrices:
        raise ValueError("nothing to pack")
    lens = [m.shape[0] for m in matrices]
    if min(lens) == 0:
        raise ValueError("zero-length segments are not allowed")
    offsets = np.zeros(len(lens) + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    return np.concatenate(matrices, axis=0), offsets


def span_head_loss_and_grad(X: np.ndarray, offsets: np.ndarray, gold_rows: np.ndarray,
                            w: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of one softmax head and its gradient in w.

    gold_rows holds the packed row index of each segment's gold token.
    """
    scores = X @ w
    probs = kernels.segment_softmax(scores, offsets)
    n_seg = offsets.size - 1
    loss = float(-np.log(probs[gold_rows]).mean())
    grad = (X.T @ probs - X[gold_rows].sum(axis=0)) / n_seg
    return loss, grad


def train_baseline(samples: Sequence[Sample], contexts: Mapping[str, ContextDoc],
                   config: TrainConfig = TrainConfig(),
                   featurizer: Featurizer | None = None,
                   feature_matrices: Sequence[np.ndarray] | None = None) -> BaselineModel:
    """Fit both heads on the given samples.

    The first gold answer of each sample is the training target. The two
    optional arguments let callers reuse a fitted featurizer and cached
    feature matrices; results are identical either way.
    """
    if not samples:
        raise ValueError("cannot train on an empty sample list")
    if featurizer is None:
        featurizer = Featurizer.fit(contexts, window=config.window)
    if feature_matrices is None:
        feature_matrices = [featurizer.features(s.question, contexts[s.doc_id]) for s in samples]
    X, offsets = pack_matrices(feature_matrices)

    gold_start = np.empty(len(samples), dtype=np.int64)
    gold_end = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        answer = s.gold_answers[0]
        n_tok = offsets[i + 1] - offsets[i]
        if not (0 <= answer.token_start <= answer.token_end < n_tok):
            raise ValueError(f"sample {s.sample_id!r}: gold span outside its context")
        gold_start[i] = offsets[i] + answer.token_start
        gold_end[i] = offsets[i] + answer.token_end

    w_start = np.zeros(N_FEATURES, dtype=np.float64)
    w_end = np.zeros(N_FEATURES, dtype=np.float64)
    for _ in range(config.epochs):
        _, g = span_head_loss_and_grad(X, offsets, gold_start, w_start)
        w_start -= config.learning_rate * g
        _, g = span_head_loss_and_grad(X, offsets, gold_end, w_end)
        w_end -= config.learning_rate * g

    return BaselineModel(
        start_weights=w_start,
        end_weights=w_end,
        feature_config=FeatureConfig(window=config.window, max_span_len=config.max_span_len),
        seed=config.seed,
        idf=featurizer.idf,
        default_idf=featurizer.default_idf,
        idf_norm=featurizer.idf_norm,
    )
