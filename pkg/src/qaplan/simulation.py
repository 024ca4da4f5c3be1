"""Annotation budget simulation.

Replays pool-based annotation on an already-labeled dataset: batches of a
fixed fraction are "annotated" per iteration (the first batch always at
random, later ones per the configured strategy), the scorer is retrained
from scratch on the labeled set, and the in-domain and generalization
metrics are recorded into learning curves. Saturation analysis then reports
the smallest training fraction whose score reaches a threshold share of the
full-data reference.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import CorpusError, Dataset, PoolState
from .metrics import EvalResult, evaluate
from .scorer import uncertainty
from .strategies import (
    DifficultyLabel,
    SelectionBatch,
    StrategySpec,
    classify_difficulty,
    select_context_roundrobin,
    select_difficulty,
    select_random,
    select_uncertainty,
)
from .util import atomic_write_text, derive_seed

IN_DOMAIN = "in_domain"
_SALT_SELECT = 101
_SALT_TRAIN = 202
_SALT_CYCLE = 303


@dataclass
class SimulationConfig:
    strategy: StrategySpec
    scorer: object  # anything with create() -> scorer instance
    batch_fraction: float = 0.015
    metric: str = "f1"
    saturation_threshold: float = 0.995
    seeds: tuple[int, ...] = (0, 1, 2)
    max_iterations: int | None = None

    def __post_init__(self):
        if not (0.0 < self.batch_fraction <= 1.0):
            raise ValueError("batch_fraction must be in (0, 1]")
        if self.metric not in ("f1", "em"):
            raise ValueError("metric must be 'f1' or 'em'")
        if not (0.0 < self.saturation_threshold <= 1.0):
            raise ValueError("saturation_threshold must be in (0, 1]")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.strategy.kind == "per_context_quota":
            raise ValueError("per_context_quota builds one-shot worklists and cannot drive a simulation")


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    labeled_count: int
    labeled_fraction: float
    in_domain: EvalResult
    generalization: dict[str, EvalResult] = field(default_factory=dict)


@dataclass
class LearningCurve:
    config: SimulationConfig
    runs: tuple[tuple[CurvePoint, ...], ...]  # one tuple of points per seed
    points: tuple[CurvePoint, ...]  # seed-averaged
    reference: dict[str, EvalResult]  # full-data results per eval set
    batch_order: tuple[str, ...] = ()  # annotation order of the first seed

    def eval_set_names(self) -> list[str]:
        names = [IN_DOMAIN]
        if self.points:
            names.extend(sorted(self.points[0].generalization))
        return names


def _metric_value(result: EvalResult, metric: str) -> float:
    return result.f1 if metric == "f1" else result.exact_match


def batch_schedule(n_samples: int, batch_fraction: float) -> list[int]:
    """Batch sizes covering the whole pool: ceil(b*n) per batch, smaller final."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    size = math.ceil(batch_fraction * n_samples)
    sizes = []
    remaining = n_samples
    while remaining > 0:
        take = min(size, remaining)
        sizes.append(take)
        remaining -= take
    return sizes


def _check_holdout_disjoint(train: Dataset, holdout: Dataset) -> None:
    shared_ids = {s.sample_id for s in train.samples} & {s.sample_id for s in holdout.samples}
    if shared_ids:
        raise CorpusError(f"holdout shares sample ids with the training set: {sorted(shared_ids)[:5]}")
    shared_docs = train.contexts.keys() & holdout.contexts.keys()
    if shared_docs:
        raise CorpusError(f"holdout shares context documents with the training set: {sorted(shared_docs)[:5]}")


def _evaluate_sets(scorer, holdout: Dataset, generalization_sets: Mapping[str, Dataset]) -> tuple[EvalResult, dict[str, EvalResult]]:
    def run(ds: Dataset) -> EvalResult:
        preds = scorer.predict_batch(ds.samples, ds.contexts)
        return evaluate({sid: p.answer_text for sid, p in preds.items()}, ds)

    gen = {name: run(ds) for name, ds in sorted(generalization_sets.items())}
    return run(holdout), gen


def run_full_reference(train: Dataset, eval_sets: Mapping[str, Dataset], scorer, seed: int = 0) -> dict[str, EvalResult]:
    """Train on the full dataset once and evaluate every eval set."""
    owned = hasattr(scorer, "create")
    instance = scorer.create() if owned else scorer
    try:
        instance.retrain(list(train.samples), train.contexts, seed=seed)
        out = {}
        for name, ds in eval_sets.items():
            preds = instance.predict_batch(ds.samples, ds.contexts)
            out[name] = evaluate({sid: p.answer_text for sid, p in preds.items()}, ds)
        return out
    finally:
        if owned:
            instance.close()


def _strategy_needs_scores(spec: StrategySpec) -> bool:
    if spec.kind in ("uncertainty", "difficulty"):
        return True
    return spec.kind == "context_roundrobin" and spec.within_rule == "uncertainty"


def _select_batch(spec: StrategySpec, pool: PoolState, k: int, train: Dataset,
                  scorer, run_seed: int, iteration: int) -> SelectionBatch:
    seed = derive_seed(run_seed, iteration, _SALT_SELECT)
    if iteration == 1 or spec.kind == "random":
        return select_random(pool, k, seed=seed, iteration=iteration)

    sample_of = {s.sample_id: s for s in train.samples}
    scores: dict[str, float] | None = None
    labels: dict[str, DifficultyLabel] | None = None
    if _strategy_needs_scores(spec):
        unlabeled = [sample_of[sid] for sid in pool.unlabeled]
        pairs = scorer.score_pool(unlabeled, train.contexts)
        scores = {sid: uncertainty(pair.full) for sid, pair in pairs.items()}
        if spec.kind == "difficulty":
            labels = {sid: classify_difficulty(sid, pair) for sid, pair in pairs.items()}

    if spec.kind == "uncertainty":
        return select_uncertainty(pool, k, scores, seed=seed, iteration=iteration)
    if spec.kind == "difficulty":
        return select_difficulty(pool, k, labels, seed=seed, iteration=iteration)
    if spec.kind == "context_roundrobin":
        cycle_seed = derive_seed(run_seed, 0, _SALT_CYCLE)
        return select_context_roundrobin(
            pool, k, train, within_rule=spec.within_rule, seed=cycle_seed,
            scores=scores, iteration=iteration,
        )
    raise ValueError(f"strategy {spec.kind!r} cannot drive a simulation")


def _run_replica(train: Dataset, holdout: Dataset, generalization_sets: Mapping[str, Dataset],
                 config: SimulationConfig, run_seed: int) -> tuple[tuple[CurvePoint, ...], tuple[str, ...]]:
    scorer = config.scorer.create()
    try:
        n = len(train.samples)
        k = math.ceil(config.batch_fraction * n)
        position = {s.sample_id: i for i, s in enumerate(train.samples)}
        sample_of = {s.sample_id: s for s in train.samples}

        pool = PoolState.fresh(train)
        points: list[CurvePoint] = []
        order: list[str] = []
        iteration = 0
        while pool.unlabeled:
            iteration += 1
            batch = _select_batch(config.strategy, pool, k, train, scorer, run_seed, iteration)
            pool = pool.with_labeled(batch.sample_ids)
            order.extend(batch.sample_ids)
            # training consumes the labeled set in dataset order, so a full
            # pool reproduces the full-data reference exactly
            labeled = [sample_of[sid] for sid in sorted(pool.labeled, key=position.__getitem__)]
            scorer.retrain(labeled, train.contexts, seed=derive_seed(run_seed, iteration, _SALT_TRAIN))
            in_domain, gen = _evaluate_sets(scorer, holdout, generalization_sets)
            points.append(CurvePoint(
                iteration=iteration,
                labeled_count=len(labeled),
                labeled_fraction=len(labeled) / n,
                in_domain=in_domain,
                generalization=gen,
            ))
            if config.max_iterations is not None and iteration >= config.max_iterations:
                break
        return tuple(points), tuple(order)
    finally:
        scorer.close()


def _mean_results(results: Sequence[EvalResult]) -> EvalResult:
    return EvalResult(
        exact_match=sum(r.exact_match for r in results) / len(results),
        f1=sum(r.f1 for r in results) / len(results),
        n_samples=results[0].n_samples,
        n_missing=max(r.n_missing for r in results),
    )


def _average_runs(runs: Sequence[Sequence[CurvePoint]]) -> tuple[CurvePoint, ...]:
    n_points = {len(r) for r in runs}
    if len(n_points) != 1:
        raise RuntimeError("replicas produced different numbers of curve points")
    averaged = []
    for idx in range(n_points.pop()):
        at = [run[idx] for run in runs]
        gen_names = at[0].generalization.keys()
        averaged.append(CurvePoint(
            iteration=at[0].iteration,
            labeled_count=at[0].labeled_count,
            labeled_fraction=at[0].labeled_fraction,
            in_domain=_mean_results([p.in_domain for p in at]),
            generalization={name: _mean_results([p.generalization[name] for p in at]) for name in gen_names},
        ))
    return tuple(averaged)


def run_simulation(train: Dataset, holdout: Dataset, generalization_sets: Mapping[str, Dataset],
                   config: SimulationConfig, reference: Mapping[str, EvalResult] | None = None,
                   jobs: int = 1) -> LearningCurve:
    """Run the simulation over every configured seed and average the curves.

    Replicas are independent; jobs > 1 runs them in a thread pool. The
    full-data reference is computed once unless a cached one is supplied.
    """
    if not train.samples:
        raise CorpusError("training dataset has no samples")
    if not holdout.samples:
        raise CorpusError("holdout dataset has no samples")
    _check_holdout_disjoint(train, holdout)

    eval_sets = {IN_DOMAIN: holdout, **{k: v for k, v in sorted(generalization_sets.items())}}
    if IN_DOMAIN in generalization_sets:
        raise ValueError(f"{IN_DOMAIN!r} is a reserved eval set name")

    if reference is None:
        reference = run_full_reference(train, eval_sets, config.scorer, seed=config.seeds[0])
    reference = dict(reference)
    missing = set(eval_sets) - set(reference)
    if missing:
        raise ValueError(f"reference is missing eval sets: {sorted(missing)}")

    if jobs > 1 and len(config.seeds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda seed: _run_replica(train, holdout, generalization_sets, config, seed),
                config.seeds,
            ))
    else:
        results = [_run_replica(train, holdout, generalization_sets, config, seed) for seed in config.seeds]

    runs = tuple(points for points, _ in results)
    return LearningCurve(
        config=config,
        runs=runs,
        points=_average_runs(runs),
        reference=reference,
        batch_order=results[0][1],
    )


# ---------------------------------------------------------------- saturation

def detect_saturation(curve: Sequence[tuple[float, float]], reference: float,
                      threshold: float = 0.995) -> float | None:
    """Smallest fraction whose value reaches threshold * reference.

    The scan is a literal first crossing; later dips do not move it. Returns
    None when the curve never reaches the cutoff.
    """
    if reference <= 0:
        raise ValueError("reference must be positive")
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    fractions = [f for f, _ in curve]
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("curve fractions must be strictly increasing")
    cutoff = threshold * reference
    for fraction, value in curve:
        if value >= cutoff:
            return fraction
    return None


@dataclass(frozen=True)
class SaturationEntry:
    eval_set: str
    reference: float
    cutoff: float
    fraction: float | None
    per_seed: tuple[float | None, ...]
    median: float | None
    dips_after_crossing: bool


@dataclass
class SaturationReport:
    metric: str
    threshold: float
    strategy: str
    entries: dict[str, SaturationEntry]

    def gaps(self) -> dict[str, float | None]:
        return saturation_gap(self)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "threshold": self.threshold,
            "strategy": self.strategy,
            "eval_sets": {
                name: {
                    "reference": e.reference,
                    "cutoff": e.cutoff,
                    "fraction": e.fraction,
                    "per_seed": list(e.per_seed),
                    "median": e.median,
                    "dips_after_crossing": e.dips_after_crossing,
                }
                for name, e in self.entries.items()
            },
            "gaps": self.gaps(),
        }


def _series(points: Sequence[CurvePoint], eval_set: str, metric: str) -> list[tuple[float, float]]:
    if eval_set == IN_DOMAIN:
        return [(p.labeled_fraction, _metric_value(p.in_domain, metric)) for p in points]
    return [(p.labeled_fraction, _metric_value(p.generalization[eval_set], metric)) for p in points]


def build_saturation_report(curve: LearningCurve) -> SaturationReport:
    """Saturation fractions for the averaged curve and every seed replica."""
    metric = curve.config.metric
    threshold = curve.config.saturation_threshold
    entries = {}
    for name in curve.eval_set_names():
        reference = _metric_value(curve.reference[name], metric)
        series = _series(curve.points, name, metric)
        fraction = detect_saturation(series, reference, threshold)
        per_seed = tuple(
            detect_saturation(_series(run, name, metric), reference, threshold)
            for run in curve.runs
        )
        median = statistics.median(per_seed) if all(f is not None for f in per_seed) else None
        cutoff = threshold * reference
        dips = False
        if fraction is not None:
            crossed = [v for f, v in series if f > fraction]
            dips = any(v < cutoff for v in crossed)
        entries[name] = SaturationEntry(
            eval_set=name, reference=reference, cutoff=cutoff,
            fraction=fraction, per_seed=per_seed, median=median,
            dips_after_crossing=dips,
        )
    return SaturationReport(
        metric=metric, threshold=threshold,
        strategy=curve.config.strategy.describe(), entries=entries,
    )


def saturation_gap(report: SaturationReport) -> dict[str, float | None]:
    """Per generalization set: in-domain fraction minus that set's fraction.

    Positive means the generalization curve saturated earlier than the
    in-domain curve. None when either side never saturated.
    """
    in_domain = report.entries.get(IN_DOMAIN)
    out: dict[str, float | None] = {}
    for name, entry in report.entries.items():
        if name == IN_DOMAIN:
            continue
        if in_domain is None or in_domain.fraction is None or entry.fraction is None:
            out[name] = None
        else:
            out[name] = in_domain.fraction - entry.fraction
    return out


# ---------------------------------------------------------------- comparison

@dataclass
class StrategyComparison:
    metric: str
    threshold: float
    saturation: dict[str, dict[str, float | None]]  # strategy -> eval set -> fraction
    random_baseline: str | None
    savings: dict[str, dict[str, float | None]]  # percentage points of data saved vs random
    unsaturated: list[tuple[str, str]]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "threshold": self.threshold,
            "saturation": self.saturation,
            "random_baseline": self.random_baseline,
            "savings_vs_random": self.savings,
            "unsaturated": [list(pair) for pair in self.unsaturated],
        }


def _results_close(a: EvalResult, b: EvalResult, tol: float = 1e-9) -> bool:
    return (a.n_samples == b.n_samples
            and abs(a.exact_match - b.exact_match) <= tol
            and abs(a.f1 - b.f1) <= tol)


def compare_strategies(curves: Mapping[str, LearningCurve]) -> StrategyComparison:
    """Side-by-side saturation fractions, plus data saved relative to the
    random strategy. All curves must share references and settings."""
    if not curves:
        raise ValueError("no curves to compare")
    names = list(curves)
    first = curves[names[0]]
    for name in names[1:]:
        other = curves[name]
        if other.config.metric != first.config.metric or \
           other.config.saturation_threshold != first.config.saturation_threshold:
            raise ValueError("curves were built with different metric/threshold settings")
        if set(other.reference) != set(first.reference):
            raise ValueError("curves cover different eval sets")
        for eval_set, result in first.reference.items():
            if not _results_close(result, other.reference[eval_set]):
                raise ValueError(f"curve {name!r} has a mismatched reference for {eval_set!r}")

    reports = {name: build_saturation_report(curve) for name, curve in curves.items()}
    saturation = {
        name: {ev: entry.fraction for ev, entry in report.entries.items()}
        for name, report in reports.items()
    }
    unsaturated = [(name, ev) for name, per_set in saturation.items()
                   for ev, frac in per_set.items() if frac is None]

    random_names = [name for name in names if curves[name].config.strategy.kind == "random"]
    baseline = random_names[0] if random_names else None
    savings: dict[str, dict[str, float | None]] = {}
    if baseline is not None:
        base = saturation[baseline]
        for name in names:
            if name == baseline:
                continue
            savings[name] = {}
            for ev, frac in saturation[name].items():
                if frac is None or base[ev] is None:
                    savings[name][ev] = None
                else:
                    savings[name][ev] = 100.0 * (base[ev] - frac)
    return StrategyComparison(
        metric=first.config.metric,
        threshold=first.config.saturation_threshold,
        saturation=saturation,
        random_baseline=baseline,
        savings=savings,
        unsaturated=unsaturated,
    )


# ---------------------------------------------------------------- export

CURVE_COLUMNS = ("strategy", "seed", "iteration", "labeled_count", "labeled_fraction",
                 "eval_set", "exact_match", "f1", "n_samples", "n_missing")


def _curve_rows(curve: LearningCurve) -> list[list[str]]:
    strategy = curve.config.strategy.describe()
    rows = []

    def emit(seed_label: str, points: Sequence[CurvePoint]) -> None:
        for p in points:
            per_set = [(IN_DOMAIN, p.in_domain)] + sorted(p.generalization.items())
            for eval_set, result in per_set:
                rows.append([
                    strategy, seed_label, str(p.iteration), str(p.labeled_count),
                    repr(p.labeled_fraction), eval_set, repr(result.exact_match),
                    repr(result.f1), str(result.n_samples), str(result.n_missing),
                ])

    for seed, run in zip(curve.config.seeds, curve.runs):
        emit(str(seed), run)
    emit("mean", curve.points)
    return rows


def export_curve_csv(curve: LearningCurve, path: str) -> None:
    """One row per iteration x eval set x seed, then the averaged rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    writer.writerows(_curve_rows(curve))
    atomic_write_text(path, buf.getvalue())


def export_saturation_json(report: SaturationReport, path: str) -> None:
    atomic_write_text(path, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")


def export_report(curve: LearningCurve, report: SaturationReport, out_dir: str) -> dict[str, str]:
    """Write curve.csv and saturation.json into out_dir; returns the paths.

    Writes are atomic: a failure leaves no partial files behind.
    """
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "curve.csv")
    sat_path = os.path.join(out_dir, "saturation.json")
    export_curve_csv(curve, curve_path)
    export_saturation_json(report, sat_path)
    return {"curve": curve_path, "saturation": sat_path}
