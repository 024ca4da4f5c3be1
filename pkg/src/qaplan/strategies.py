"""Annotation selection strategies.

Every selector consumes a pool of unlabeled sample ids and returns a ranked
SelectionBatch. Strategies that need model signals take them as plain maps
(sample id to uncertainty score, or to a difficulty label) so any scorer
backend can feed them.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, PoolState
from .scorer import PredictionPair
from .util import atomic_write_text

STRATEGY_KINDS = ("random", "uncertainty", "difficulty", "context_roundrobin", "per_context_quota")
WITHIN_RULES = ("random", "uncertainty")


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    seed: int = 0
    within_rule: str = "random"
    questions_per_context: int | None = None
    n_contexts: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.within_rule not in WITHIN_RULES:
            raise ValueError(f"unknown within_rule {self.within_rule!r}")
        if self.kind == "per_context_quota":
            if not self.questions_per_context or not self.n_contexts:
                raise ValueError("per_context_quota needs questions_per_context and n_contexts")

    def describe(self) -> str:
        if self.kind in ("context_roundrobin", "per_context_quota"):
            return f"{self.kind}:{self.within_rule}"
        return self.kind


@dataclass(frozen=True)
class DifficultyLabel:
    sample_id: str
    label: str  # "easy" | "hard"

    def __post_init__(self):
        if self.label not in ("easy", "hard"):
            raise ValueError(f"label must be 'easy' or 'hard', got {self.label!r}")


@dataclass(frozen=True)
class SelectionBatch:
    sample_ids: tuple[str, ...]
    strategy: StrategySpec
    iteration: int = 0
    scores: dict[str, float] = field(default_factory=dict)
    shortfall: int = 0

    def __post_init__(self):
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("selection batch contains duplicate ids")


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def select_random(pool: PoolState, k: int, seed: int = 0, iteration: int = 0) -> SelectionBatch:
    """k unlabeled ids drawn uniformly without replacement."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ids = pool.unlabeled
    take = min(k, len(ids))
    perm = _rng(seed).permutation(len(ids))[:take]
    chosen = tuple(ids[i] for i in perm)
    return SelectionBatch(chosen, StrategySpec("random", seed=seed), iteration=iteration)


def select_uncertainty(pool: PoolState, k: int, scores: Mapping[str, float],
                       seed: int = 0, iteration: int = 0) -> SelectionBatch:
    """Top-k unlabeled ids by descending score; ties by ascending sample id."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ids = pool.unlabeled
    missing = [i for i in ids if i not in scores]
    if missing:
        raise ValueError(f"scores missing for unlabeled ids: {missing[:5]}")
    ranked = sorted(ids, key=lambda sid: (-scores[sid], sid))[: min(k, len(ids))]
    return SelectionBatch(
        tuple(ranked),
        StrategySpec("uncertainty", seed=seed),
        iteration=iteration,
        scores={sid: float(scores[sid]) for sid in ranked},
    )


def classify_difficulty(sample_id: str, pair: PredictionPair) -> DifficultyLabel:
    """Easy when the best spans under the full and the truncated question are
    token-identical, hard otherwise."""
    if pair.full is None or pair.truncated is None:
        raise ValueError(f"sample {sample_id!r}: both question variants must be predicted")
    if pair.full.start_probs.size != pair.truncated.start_probs.size:
        raise ValueError(f"sample {sample_id!r}: variants were predicted on different documents")
    label = "easy" if pair.full.best_span == pair.truncated.best_span else "hard"
    return DifficultyLabel(sample_id=sample_id, label=label)


def select_difficulty(pool: PoolState, k: int, labels: Mapping[str, DifficultyLabel],
                      seed: int = 0, iteration: int = 0) -> SelectionBatch:
    """All hard samples first (random order), then easy ones, truncated to k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ids = pool.unlabeled
    missing = [i for i in ids if i not in labels]
    if missing:
        raise ValueError(f"difficulty labels missing for unlabeled ids: {missing[:5]}")
    hard = [i for i in ids if labels[i].label == "hard"]
    easy = [i for i in ids if labels[i].label == "easy"]
    rng = _rng(seed)
    hard = [hard[i] for i in rng.permutation(len(hard))]
    easy = [easy[i] for i in rng.permutation(len(easy))]
    chosen = tuple((hard + easy)[: min(k, len(ids))])
    return SelectionBatch(chosen, StrategySpec("difficulty", seed=seed), iteration=iteration)


def _ranked_context_samples(dataset: Dataset, within_rule: str, seed: int,
                            scores: Mapping[str, float] | None) -> dict[str, list[str]]:
    """Per-context sample order under the within-context rule.

    The random order shuffles each context's full sample list under the run
    seed, so it is stable across iterations of the same run.
    """
    by_doc: dict[str, list[str]] = {doc_id: [] for doc_id in dataset.contexts}
    for s in dataset.samples:
        by_doc[s.doc_id].append(s.sample_id)
    if within_rule == "uncertainty":
        if scores is None:
            raise ValueError("within_rule 'uncertainty' needs scores")
        for doc_id, sids in by_doc.items():
            missing = [i for i in sids if i not in scores]
            if missing:
                raise ValueError(f"scores missing for ids: {missing[:5]}")
            by_doc[doc_id] = sorted(sids, key=lambda sid: (-scores[sid], sid))
    else:
        rng = _rng(seed)
        for doc_id in by_doc:
            sids = by_doc[doc_id]
            by_doc[doc_id] = [sids[i] for i in rng.permutation(len(sids))]
    return by_doc


def select_context_roundrobin(pool: PoolState, k: int, dataset: Dataset,
                              within_rule: str = "random", seed: int = 0,
                              scores: Mapping[str, float] | None = None,
                              iteration: int = 0) -> SelectionBatch:
    """Cycle context documents, taking one sample per visit.

    The cycle order is a uniform shuffle of all context ids under the seed,
    fixed for a whole run. A context is only visited once per coverage level,
    where its level counts already-labeled samples plus picks made in this
    call; documents with fewer annotated samples are therefore always served
    first, and no context gets a second sample in a batch while another
    still has its first coming. Exhausted contexts are skipped.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if within_rule not in WITHIN_RULES:
        raise ValueError(f"unknown within_rule {within_rule!r}")
    unlabeled = set(pool.unlabeled)
    labeled = set(pool.labeled)

    rng = _rng(seed)
    doc_ids = list(dataset.contexts)
    cycle = [doc_ids[i] for i in rng.permutation(len(doc_ids))]

    ranked = _ranked_context_samples(dataset, within_rule, seed, scores)
    remaining = {doc_id: [sid for sid in sids if sid in unlabeled] for doc_id, sids in ranked.items()}
    level = {doc_id: sum(1 for sid in sids if sid in labeled) for doc_id, sids in ranked.items()}

    chosen: list[str] = []
    want = min(k, len(unlabeled))
    while len(chosen) < want:
        active = [d for d in cycle if remaining[d]]
        if not active:
            break
        floor = min(level[d] for d in active)
        for doc_id in cycle:
            if len(chosen) >= want:
                break
            if remaining[doc_id] and level[doc_id] == floor:
                chosen.append(remaining[doc_id].pop(0))
                level[doc_id] += 1
    spec = StrategySpec("context_roundrobin", seed=seed, within_rule=within_rule)
    picked_scores = {}
    if within_rule == "uncertainty" and scores is not None:
        picked_scores = {sid: float(scores[sid]) for sid in chosen}
    return SelectionBatch(tuple(chosen), spec, iteration=iteration, scores=picked_scores)


def select_per_context_quota(dataset: Dataset, questions_per_context: int, n_contexts: int,
                             within_rule: str = "random", seed: int = 0,
                             scores: Mapping[str, float] | None = None) -> SelectionBatch:
    """One-shot worklist: pick n_contexts context documents, then up to
    questions_per_context samples from each under the within-context rule.

    Contexts with enough samples are preferred and drawn uniformly under the
    seed. When contexts or questions run short the batch is still returned,
    with the missing count reported in SelectionBatch.shortfall.
    """
    if questions_per_context < 1 or n_contexts < 1:
        raise ValueError("questions_per_context and n_contexts must be >= 1")
    if within_rule not in WITHIN_RULES:
        raise ValueError(f"unknown within_rule {within_rule!r}")
    ranked = _ranked_context_samples(dataset, within_rule, seed, scores)

    rng = _rng(seed)
    eligible = [d for d in dataset.contexts if len(ranked[d]) >= questions_per_context]
    rest = [d for d in dataset.contexts if 0 < len(ranked[d]) < questions_per_context]
    eligible = [eligible[i] for i in rng.permutation(len(eligible))]
    rest = [rest[i] for i in rng.permutation(len(rest))]

    if len(eligible) >= n_contexts:
        chosen_docs = eligible[:n_contexts]
    else:
        chosen_docs = eligible + rest[: n_contexts - len(eligible)]

    chosen: list[str] = []
    picked_scores: dict[str, float] = {}
    for doc_id in chosen_docs:
        take = ranked[doc_id][:questions_per_context]
        chosen.extend(take)
        if within_rule == "uncertainty" and scores is not None:
            for sid in take:
                picked_scores[sid] = float(scores[sid])
    shortfall = n_contexts * questions_per_context - len(chosen)
    spec = StrategySpec(
        "per_context_quota", seed=seed, within_rule=within_rule,
        questions_per_context=questions_per_context, n_contexts=n_contexts,
    )
    return SelectionBatch(tuple(chosen), spec, scores=picked_scores, shortfall=shortfall)


WORKLIST_COLUMNS = ("rank", "sample_id", "doc_id", "strategy", "score", "difficulty_label")


def worklist_rows(batch: SelectionBatch, dataset: Dataset,
                  labels: Mapping[str, DifficultyLabel] | None = None) -> list[list[str]]:
    doc_of = {s.sample_id: s.doc_id for s in dataset.samples}
    rows = []
    for rank, sid in enumerate(batch.sample_ids, start=1):
        score = batch.scores.get(sid)
        label = labels[sid].label if labels and sid in labels else ""
        rows.append([
            str(rank),
            sid,
            doc_of.get(sid, ""),
            batch.strategy.describe(),
            repr(score) if score is not None else "",
            label,
        ])
    return rows


def export_worklist(batch: SelectionBatch, dataset: Dataset, path: str,
                    labels: Mapping[str, DifficultyLabel] | None = None) -> None:
    """Write the ranked batch as a CSV worklist."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(WORKLIST_COLUMNS)
    writer.writerows(worklist_rows(batch, dataset, labels))
    atomic_write_text(path, buf.getvalue())
