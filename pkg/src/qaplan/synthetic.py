"""Synthetic extractive QA corpora with controlled difficulty structure.

Context documents mix three sentence shapes: fact sentences ("<name> <verb>
the <object> on day <n> ."), anchor-free filler sentences carrying one long
adverb, and one sentence introducing a rare long token unique to the
document. Questions come in a lexical-anchor family, whose anchors sit
inside or outside the first three question words, and a rare "locate the
odd token" family whose only usable signal is the rare token's overlap with
the question. The two families pull shared model weights in opposite
directions, so a model trained only on anchor questions gets the rare
family wrong; pools are skewed toward the anchor family while evaluation
sets are balanced. That structure makes the corpora useful for exercising
selection strategies end to end.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .corpus import AnswerSpan, ContextDoc, Dataset, Sample, save_squad_json, tokenize

_SYLLABLES = ("ba", "den", "ko", "mar", "tel", "ri", "sun", "vo", "pel", "gra",
              "li", "dor", "na", "quin", "ze", "fa", "rud", "mi", "tos", "hel")

FACT_VERBS = ("moved", "stored", "painted", "sold", "kept", "built", "sent",
              "lost", "hid", "traded")

OBJECT_POOL = ("ledger", "lantern", "barrel", "compass", "banner", "kettle",
               "saddle", "mirror", "chisel", "basket", "helmet", "scroll",
               "plough", "sickle", "bucket", "carpet", "candle", "hammer",
               "marble", "bottle", "shovel", "pillow", "ribbon", "anvil")

OBJECT_POOL_SHIFTED = ("piston", "gasket", "dynamo", "spindle", "flange",
                       "socket", "pulley", "bearing", "ratchet", "nozzle",
                       "washer", "filter", "sensor", "switch", "spanner",
                       "turbine", "magnet", "copper", "crystal", "engine",
                       "funnel", "girder", "heater", "intake")

ADVERBS = ("spontaneously", "unquestionably", "paradoxically", "relentlessly")

_FILLER_PAIRS = (("days", "drifted"), ("winter", "lingered"), ("silence", "settled"))

ODD_QUESTION_TEMPLATES = ("locate token {word} ?", "find word {word} ?")


@dataclass
class _Fact:
    subj: str
    verb: str
    obj: str
    subj_idx: int
    obj_idx: int


def _make_word(rng: np.random.Generator, n_syllables: int) -> str:
    parts = [_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=n_syllables)]
    return "".join(parts).capitalize()


def _word_offsets(words: list[str]) -> list[int]:
    starts = []
    pos = 0
    for w in words:
        starts.append(pos)
        pos += len(w) + 1
    return starts


def _build_doc(rng: np.random.Generator, object_pool) -> tuple[list[str], list[_Fact], int, str]:
    """Word list for one document, its facts, the odd token's index and text."""
    n_facts = 6
    names: list[str] = []
    while len(names) < n_facts:
        w = _make_word(rng, int(rng.integers(2, 4)))
        if w not in names:
            names.append(w)
    objs = [object_pool[int(i)] for i in rng.choice(len(object_pool), size=n_facts, replace=False)]
    mystery = _make_word(rng, 5)

    slots = ["fact"] * n_facts + ["filler", "filler", "odd"]
    slots = [slots[int(i)] for i in rng.permutation(len(slots))]

    words: list[str] = []
    facts: list[_Fact] = []
    odd_idx = -1
    fact_i = 0
    for slot in slots:
        if slot == "odd":
            odd_idx = len(words)
            words.extend([mystery, "sat", "apart", "."])
        elif slot == "filler":
            # long adverbs live here; padding keeps them more than three
            # tokens from both sentence boundaries so no anchor window
            # from a neighboring fact sentence can reach them
            noun, verb = _FILLER_PAIRS[int(rng.integers(0, len(_FILLER_PAIRS)))]
            adv = ADVERBS[int(rng.integers(0, len(ADVERBS)))]
            words.extend([noun, verb, "past", adv, "onward", "again", "."])
        else:
            subj = names[fact_i]
            verb = FACT_VERBS[int(rng.integers(0, len(FACT_VERBS)))]
            obj = objs[fact_i]
            subj_idx = len(words)
            words.extend([subj, verb, "the"])
            obj_idx = len(words)
            words.extend([obj, "on", "day", str(int(rng.integers(1, 29))), "."])
            facts.append(_Fact(subj=subj, verb=verb, obj=obj,
                               subj_idx=subj_idx, obj_idx=obj_idx))
            fact_i += 1
    return words, facts, odd_idx, mystery


def build_corpus(name: str, n_contexts: int, anchors_per_doc: int, odd_per_doc: int,
                 seed: int = 0, role: str = "train", object_pool=OBJECT_POOL,
                 odd_doc_fraction: float = 1.0) -> Dataset:
    """Generate a corpus with the given per-document question mix.

    anchors_per_doc controls the lexical-anchor questions (a blend of easy
    phrasing with anchors in the first three words, hard phrasing with
    anchors later, and subject questions); odd_per_doc controls questions
    about the document's rare token, asked only on a random odd_doc_fraction
    of the documents. All gold answers are single tokens.
    """
    rng = np.random.default_rng(seed)
    contexts: dict[str, ContextDoc] = {}
    samples: list[Sample] = []
    q_counter = 0

    for ci in range(n_contexts):
        doc_id = f"{name}-d{ci:04d}"
        words, facts, odd_idx, mystery = _build_doc(rng, object_pool)
        starts = _word_offsets(words)
        text = " ".join(words)
        doc = ContextDoc(doc_id=doc_id, text=text, tokens=tokenize(text))
        contexts[doc_id] = doc

        def add_sample(question: str, word_idx: int):
            nonlocal q_counter
            ans_text = words[word_idx]
            char_start = starts[word_idx]
            if doc.text[char_start: char_start + len(ans_text)] != ans_text:
                raise RuntimeError("generator produced a misaligned answer")
            samples.append(Sample(
                sample_id=f"{name}-q{q_counter:05d}",
                question=question,
                doc_id=doc_id,
                gold_answers=(AnswerSpan(text=ans_text, char_start=char_start,
                                         token_start=word_idx, token_end=word_idx),),
            ))
            q_counter += 1

        for qi in range(anchors_per_doc):
            fact = facts[qi % len(facts)]
            kind = int(rng.integers(0, 3))
            if kind == 0:
                # anchors inside the first three words
                add_sample(f"{fact.subj} {fact.verb} which thing ?", fact.obj_idx)
            elif kind == 1:
                # anchors only after the first three words
                add_sample(f"tell us what {fact.subj} {fact.verb} ?", fact.obj_idx)
            else:
                add_sample(f"who {fact.verb} the {fact.obj} ?", fact.subj_idx)

        if rng.random() < odd_doc_fraction:
            for _ in range(odd_per_doc):
                template = ODD_QUESTION_TEMPLATES[int(rng.integers(0, len(ODD_QUESTION_TEMPLATES)))]
                add_sample(template.format(word=mystery), odd_idx)

    return Dataset(name=name, contexts=contexts, samples=tuple(samples), role=role)


def planning_pool(seed: int = 11, n_contexts: int = 160) -> Dataset:
    """Annotation pool heavily skewed toward lexical-anchor questions."""
    return build_corpus("synth-pool", n_contexts=n_contexts, anchors_per_doc=12,
                        odd_per_doc=1, seed=seed, role="train",
                        odd_doc_fraction=0.5)


def holdout_set(seed: int = 12, n_contexts: int = 40) -> Dataset:
    """Balanced in-domain evaluation set on fresh contexts."""
    return build_corpus("synth-eval", n_contexts=n_contexts, anchors_per_doc=7,
                        odd_per_doc=3, seed=seed, role="dev")


def generalization_set(seed: int = 13, n_contexts: int = 40) -> Dataset:
    """Evaluation set with a shifted object vocabulary."""
    return build_corpus("synth-shift", n_contexts=n_contexts, anchors_per_doc=7,
                        odd_per_doc=3, seed=seed, role="test", object_pool=OBJECT_POOL_SHIFTED)


def _main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(
        prog="python -m qaplan.synthetic",
        description="Write synthetic SQuAD-format corpora (pool, holdout, shifted eval) into a directory.",
    )
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--contexts", type=int, default=180, help="pool size; eval sets scale down")
    args = parser.parse_args(argv)

    os.makedirs(args.out_dir, exist_ok=True)
    eval_contexts = max(4, args.contexts // 4)
    spec = {
        "pool.json": planning_pool(seed=args.seed, n_contexts=args.contexts),
        "holdout.json": holdout_set(seed=args.seed + 1, n_contexts=eval_contexts),
        "shifted.json": generalization_set(seed=args.seed + 2, n_contexts=eval_contexts),
    }
    manifest = {}
    for fname, ds in spec.items():
        path = os.path.join(args.out_dir, fname)
        save_squad_json(ds, path)
        manifest[fname] = {"samples": len(ds.samples), "contexts": len(ds.contexts)}
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(_main())
