"""Answer-string metrics for extractive QA: exact match and token F1."""
from __future__ import annotations

import logging
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    exact_match: float
    f1: float
    n_samples: int
    n_missing: int = 0


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""

    def remove_articles(text):
        return re.sub(r"\b(a|an|the)\b", " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    def lower(text):
        return text.lower()

    return white_space_fix(remove_articles(remove_punc(lower(s))))


def exact_match(prediction: str, gold_answers: Sequence[str]) -> int:
    """1 if the normalized prediction equals any normalized gold answer."""
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    norm_pred = normalize_answer(prediction)
    return int(any(norm_pred == normalize_answer(g) for g in gold_answers))


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return (2 * precision * recall) / (precision + recall)


def token_f1(prediction: str, gold_answers: Sequence[str]) -> float:
    """Best bag-of-tokens F1 of the prediction over the gold answers, in [0, 1]."""
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    return max(_f1_single(prediction, g) for g in gold_answers)


def evaluate(predictions: Mapping[str, str], ds: Dataset) -> EvalResult:
    """Corpus-level EM and F1, both scaled to [0, 100].

    Samples without a prediction score 0 and are counted in n_missing.
    """
    n = len(ds.samples)
    if n == 0:
        return EvalResult(exact_match=0.0, f1=0.0, n_samples=0, n_missing=0)
    em_total = 0.0
    f1_total = 0.0
    missing = 0
    for sample in ds.samples:
        if sample.sample_id not in predictions:
            missing += 1
            continue
        pred = predictions[sample.sample_id]
        golds = [a.text for a in sample.gold_answers]
        em_total += exact_match(pred, golds)
        f1_total += token_f1(pred, golds)
    if missing:
        logger.warning("evaluate: %d of %d samples had no prediction and scored 0", missing, n)
    return EvalResult(
        exact_match=100.0 * em_total / n,
        f1=100.0 * f1_total / n,
        n_samples=n,
        n_missing=missing,
    )
