"""Corpus model for extractive QA annotation planning.

Loads SQuAD-format JSON into immutable datasets, tokenizes contexts with
exact character offsets, and provides the preprocessing steps used before
planning: answer-length filtering, context-level splits, and basic stats.
"""
from __future__ import annotations

import json
import math
import os
import string
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

_PUNCT = frozenset(string.punctuation)


class CorpusError(Exception):
    """Dataset-level problem: bad structure, bad split, bad contents."""


class SquadParseError(CorpusError):
    """Malformed SQuAD JSON; the whole file is rejected."""


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class ContextDoc:
    doc_id: str
    text: str
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    char_start: int
    token_start: int
    token_end: int


@dataclass(frozen=True)
class Sample:
    sample_id: str
    question: str
    doc_id: str
    gold_answers: tuple[AnswerSpan, ...]


@dataclass(frozen=True)
class Dataset:
    name: str
    contexts: dict[str, ContextDoc]
    samples: tuple[Sample, ...]
    role: str = "train"
    dropped_samples: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DatasetStats:
    n_samples: int
    n_contexts: int
    mean_questions_per_context: float | None
    max_questions_per_context: int | None
    mean_answer_tokens: float | None

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_contexts": self.n_contexts,
            "mean_questions_per_context": self.mean_questions_per_context,
            "max_questions_per_context": self.max_questions_per_context,
            "mean_answer_tokens": self.mean_answer_tokens,
        }


class PoolState:
    """Partition of a training dataset's sample ids into labeled and unlabeled.

    Both sides keep insertion order. Instances are immutable; labeling a
    batch returns a new PoolState.
    """

    __slots__ = ("_labeled", "_unlabeled")

    def __init__(self, labeled: Iterable[str] = (), unlabeled: Iterable[str] = ()):
        self._labeled = dict.fromkeys(labeled)
        self._unlabeled = dict.fromkeys(unlabeled)
        overlap = self._labeled.keys() & self._unlabeled.keys()
        if overlap:
            raise ValueError(f"ids present on both sides of the pool: {sorted(overlap)[:5]}")

    @classmethod
    def fresh(cls, dataset: Dataset) -> "PoolState":
        ids = [s.sample_id for s in dataset.samples]
        if len(set(ids)) != len(ids):
            raise CorpusError(f"duplicate sample ids in dataset {dataset.name!r}")
        return cls(labeled=(), unlabeled=ids)

    @property
    def labeled(self) -> tuple[str, ...]:
        return tuple(self._labeled)

    @property
    def unlabeled(self) -> tuple[str, ...]:
        return tuple(self._unlabeled)

    def with_labeled(self, ids: Sequence[str]) -> "PoolState":
        """Move ids from the unlabeled side to the labeled side."""
        missing = [i for i in ids if i not in self._unlabeled]
        if missing:
            raise ValueError(f"ids not in unlabeled pool: {missing[:5]}")
        if len(set(ids)) != len(ids):
            raise ValueError("batch contains duplicate ids")
        labeled = dict.fromkeys(self._labeled)
        labeled.update(dict.fromkeys(ids))
        unlabeled = {i: None for i in self._unlabeled if i not in set(ids)}
        return PoolState(labeled=labeled, unlabeled=unlabeled)

    def __len__(self) -> int:
        return len(self._labeled) + len(self._unlabeled)


def tokenize(text: str) -> tuple[Token, ...]:
    """Whitespace tokenization with leading/trailing punctuation detached.

    Each punctuation character peeled off an end becomes its own token.
    Offsets index into the original string, so
    text[t.char_start:t.char_end] == t.text for every token.
    """
    tokens: list[Token] = []
    n = len(text)
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        a, b = i, j
        head: list[Token] = []
        while a < b and text[a] in _PUNCT:
            head.append(Token(text[a], a, a + 1))
            a += 1
        tail: list[Token] = []
        while b > a and text[b - 1] in _PUNCT:
            tail.append(Token(text[b - 1], b - 1, b))
            b -= 1
        tokens.extend(head)
        if a < b:
            tokens.append(Token(text[a:b], a, b))
        tokens.extend(reversed(tail))
        i = j
    return tuple(tokens)


def truncate_question(question: str, n_words: int = 3) -> str:
    """First n_words whitespace-delimited words, joined by single spaces."""
    if n_words < 0:
        raise ValueError("n_words must be >= 0")
    return " ".join(question.split()[:n_words])


def _align_answer(doc: ContextDoc, text: str, char_start: int) -> AnswerSpan | None:
    """Token span covering the answer characters, or None if unalignable."""
    char_end = char_start + len(text)
    if char_start < 0 or char_end > len(doc.text):
        return None
    if doc.text[char_start:char_end] != text:
        return None
    token_start = token_end = None
    for idx, tok in enumerate(doc.tokens):
        if tok.char_end > char_start and tok.char_start < char_end:
            if token_start is None:
                token_start = idx
            token_end = idx
    if token_start is None or token_end is None:
        return None
    return AnswerSpan(text=text, char_start=char_start, token_start=token_start, token_end=token_end)


def load_squad_json(path: str, name: str | None = None, role: str = "train") -> Dataset:
    """Load a SQuAD-format JSON file.

    Structural problems (missing "data", missing required fields) reject the
    whole file with the offending location in the message. A qa entry whose
    answer text does not match the context at answer_start, or that has no
    usable answers, is dropped and counted in Dataset.dropped_samples.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SquadParseError(f"{path}: not valid JSON ({exc})") from exc

    if not isinstance(raw, dict) or not isinstance(raw.get("data"), list):
        raise SquadParseError(f"{path}: missing top-level 'data' list")

    ds_name = name if name is not None else os.path.splitext(os.path.basename(path))[0]
    contexts: dict[str, ContextDoc] = {}
    samples: list[Sample] = []
    seen_sample_ids: set[str] = set()
    dropped = 0

    for ai, article in enumerate(raw["data"]):
        where = f"{path}: data[{ai}]"
        if not isinstance(article, dict) or not isinstance(article.get("paragraphs"), list):
            raise SquadParseError(f"{where}: missing 'paragraphs' list")
        for pi, para in enumerate(article["paragraphs"]):
            pwhere = f"{where}.paragraphs[{pi}]"
            if not isinstance(para, dict) or not isinstance(para.get("context"), str):
                raise SquadParseError(f"{pwhere}: missing 'context' string")
            if not isinstance(para.get("qas"), list):
                raise SquadParseError(f"{pwhere}: missing 'qas' list")
            doc_id = para.get("id") or f"{ds_name}:{ai}:{pi}"
            if doc_id in contexts:
                raise SquadParseError(f"{pwhere}: duplicate context id {doc_id!r}")
            doc = ContextDoc(doc_id=str(doc_id), text=para["context"], tokens=tokenize(para["context"]))
            contexts[doc.doc_id] = doc
            for qi, qa in enumerate(para["qas"]):
                qwhere = f"{pwhere}.qas[{qi}]"
                if not isinstance(qa, dict) or not isinstance(qa.get("question"), str):
                    raise SquadParseError(f"{qwhere}: missing 'question' string")
                if "id" not in qa:
                    raise SquadParseError(f"{qwhere}: missing 'id'")
                if not isinstance(qa.get("answers"), list):
                    raise SquadParseError(f"{qwhere}: missing 'answers' list")
                sid = str(qa["id"])
                if sid in seen_sample_ids:
                    raise SquadParseError(f"{qwhere}: duplicate qa id {sid!r}")
                seen_sample_ids.add(sid)
                spans: list[AnswerSpan] = []
                ok = True
                for ans in qa["answers"]:
                    if not isinstance(ans, dict) or "text" not in ans or "answer_start" not in ans:
                        raise SquadParseError(f"{qwhere}: answer missing 'text'/'answer_start'")
                    span = _align_answer(doc, str(ans["text"]), int(ans["answer_start"]))
                    if span is None:
                        ok = False
                        break
                    spans.append(span)
                if not ok or not spans:
                    dropped += 1
                    continue
                samples.append(Sample(sample_id=sid, question=qa["question"], doc_id=doc.doc_id, gold_answers=tuple(spans)))

    return Dataset(name=ds_name, contexts=contexts, samples=tuple(samples), role=role, dropped_samples=dropped)


def to_squad_dict(ds: Dataset) -> dict:
    """SQuAD-format dict for a Dataset; one article per context document."""
    by_doc: dict[str, list[Sample]] = {doc_id: [] for doc_id in ds.contexts}
    for s in ds.samples:
        by_doc[s.doc_id].append(s)
    data = []
    for doc_id, doc in ds.contexts.items():
        qas = [
            {
                "id": s.sample_id,
                "question": s.question,
                "answers": [{"text": a.text, "answer_start": a.char_start} for a in s.gold_answers],
            }
            for s in by_doc[doc_id]
        ]
        data.append({"title": doc_id, "paragraphs": [{"id": doc_id, "context": doc.text, "qas": qas}]})
    return {"version": "v1.0", "data": data}


def save_squad_json(ds: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_squad_dict(ds), fh, ensure_ascii=False, sort_keys=True)


def filter_long_answers(ds: Dataset, max_tokens: int = 30) -> Dataset:
    """Keep samples whose every gold answer spans at most max_tokens tokens."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    kept = tuple(
        s for s in ds.samples
        if all(a.token_end - a.token_start + 1 <= max_tokens for a in s.gold_answers)
    )
    return replace(ds, samples=kept)


def split_by_context(ds: Dataset, ratios: Sequence[float] = (0.7, 0.1, 0.2), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Split a dataset into train/dev/test at the context-document level.

    Contexts are shuffled under seed and partitioned with largest-remainder
    rounding; every question follows its context document, so no context
    appears in two splits.
    """
    if len(ratios) != 3:
        raise ValueError("ratios must have three entries")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be non-negative and sum to 1")

    doc_ids = list(ds.contexts)
    n = len(doc_ids)
    rng = np.random.default_rng(seed)
    order = [doc_ids[i] for i in rng.permutation(n)]

    raw = [r * n for r in ratios]
    counts = [math.floor(x) for x in raw]
    leftover = n - sum(counts)
    by_remainder = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    for i, r in enumerate(ratios):
        if r > 0 and counts[i] == 0:
            raise CorpusError(
                f"split ratio {r} would receive 0 of {n} contexts; dataset too small for this split"
            )

    buckets = (set(order[: counts[0]]),
               set(order[counts[0]: counts[0] + counts[1]]),
               set(order[counts[0] + counts[1]:]))
    roles = ("train", "dev", "test")
    out = []
    for bucket, role in zip(buckets, roles):
        contexts = {d: ds.contexts[d] for d in ds.contexts if d in bucket}
        samples = tuple(s for s in ds.samples if s.doc_id in bucket)
        out.append(Dataset(name=ds.name, contexts=contexts, samples=samples, role=role))
    return out[0], out[1], out[2]


def dataset_stats(ds: Dataset) -> DatasetStats:
    """Sample/context counts plus question and answer-length summaries."""
    n_samples = len(ds.samples)
    n_contexts = len(ds.contexts)
    if n_contexts == 0:
        return DatasetStats(n_samples, 0, None, None, None)
    per_context = {doc_id: 0 for doc_id in ds.contexts}
    for s in ds.samples:
        per_context[s.doc_id] += 1
    lengths = [a.token_end - a.token_start + 1 for s in ds.samples for a in s.gold_answers]
    return DatasetStats(
        n_samples=n_samples,
        n_contexts=n_contexts,
        mean_questions_per_context=n_samples / n_contexts,
        max_questions_per_context=max(per_context.values()),
        mean_answer_tokens=(sum(lengths) / len(lengths)) if lengths else None,
    )


def validate_dataset(ds: Dataset) -> None:
    """Raise CorpusError if internal references or offsets are inconsistent."""
    ids = [s.sample_id for s in ds.samples]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate sample ids")
    for doc in ds.contexts.values():
        for tok in doc.tokens:
            if doc.text[tok.char_start:tok.char_end] != tok.text:
                raise CorpusError(f"token offsets broken in context {doc.doc_id!r}")
    for s in ds.samples:
        if s.doc_id not in ds.contexts:
            raise CorpusError(f"sample {s.sample_id!r} references unknown context {s.doc_id!r}")
        if not s.gold_answers:
            raise CorpusError(f"sample {s.sample_id!r} has no gold answers")
        doc = ds.contexts[s.doc_id]
        for a in s.gold_answers:
            if doc.text[a.char_start: a.char_start + len(a.text)] != a.text:
                raise CorpusError(f"answer offsets broken in sample {s.sample_id!r}")
            if not (0 <= a.token_start <= a.token_end < len(doc.tokens)):
                raise CorpusError(f"answer token span broken in sample {s.sample_id!r}")
