"""Command line surface.

Subcommands: validate, stats, simulate, select, protocol-check, report.
Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer or protocol
error, 4 I/O error. Identical inputs and seed flags produce byte-identical
output files; nothing written here depends on time or machine state.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import shlex
import sys

from .baseline import BaselineModel, TrainConfig
from .corpus import (CorpusError, PoolState, dataset_stats, load_squad_json,
                     validate_dataset)
from .external import run_protocol_check
from .metrics import EvalResult
from .scorer import BaselineScorer, ScorerError, ScorerHandle, uncertainty
from .simulation import (IN_DOMAIN, SimulationConfig, build_saturation_report,
                         export_report, run_full_reference, run_simulation)
from .strategies import (STRATEGY_KINDS, WITHIN_RULES, SelectionBatch,
                         StrategySpec, classify_difficulty, export_worklist,
                         select_context_roundrobin, select_difficulty,
                         select_per_context_quota, select_random,
                         select_uncertainty)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse calls error() then exits; raise instead so main() owns the code
    def error(self, message):
        raise UsageError(message)


def _common_flags() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for randomized choices (default 0)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="max parallel workers (default 1)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS,
                        help="stdout format where applicable (default json)")
    return common


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(
        prog="qaplan",
        description="Plan annotation budgets for extractive QA: validate corpora, "
                    "simulate labeling strategies, emit worklists, and check scorer backends.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common],
                       help="load a SQuAD-format file and report problems")
    p.add_argument("dataset", help="SQuAD-format JSON file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="corpus summary statistics")
    p.add_argument("dataset", help="SQuAD-format JSON file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a labeling-strategy simulation from a config file")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select", parents=[common],
                       help="emit a one-shot ranked worklist for annotators")
    p.add_argument("dataset", help="SQuAD-format pool file")
    p.add_argument("--strategy", required=True, choices=STRATEGY_KINDS)
    p.add_argument("--k", type=int, help="batch size (all strategies except per_context_quota)")
    p.add_argument("--within", choices=WITHIN_RULES, default="random",
                   help="within-context rule for context strategies")
    p.add_argument("--questions-per-context", type=int, dest="questions_per_context")
    p.add_argument("--n-contexts", type=int, dest="n_contexts")
    p.add_argument("--model", help="saved baseline model JSON for model-guided strategies")
    p.add_argument("--train-on", dest="train_on",
                   help="labeled SQuAD file to fit a fresh baseline on instead of --model")
    p.add_argument("--backend", help="external scorer launch command (quoted string)")
    p.add_argument("--labeled", help="file of already-annotated sample ids, one per line")
    p.add_argument("--save-model", dest="save_model",
                   help="after --train-on, save the fitted model here")
    p.add_argument("--output", "-o", default="worklist.csv")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("protocol-check", parents=[common],
                       help="run the golden request battery against a scorer backend")
    p.add_argument("backend", nargs="+",
                   help="backend launch command; prefix with -- when it has flags")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_protocol_check)

    p = sub.add_parser("report", parents=[common],
                       help="compare saturation.json files across strategies")
    p.add_argument("saturation", nargs="+", help="saturation.json files from simulate runs")
    p.add_argument("--baseline", default="random",
                   help="strategy treated as the savings baseline (default: random)")
    p.set_defaults(func=cmd_report)
    return parser


# ------------------------------------------------------------------ validate

def cmd_validate(args) -> int:
    ds = load_squad_json(args.dataset)
    validate_dataset(ds)
    line = (f"{ds.name}: {len(ds.samples)} samples, {len(ds.contexts)} contexts, "
            f"{ds.dropped_samples} dropped")
    if ds.dropped_samples:
        print(f"invalid: {line}")
        return EXIT_DATA
    print(f"ok: {line}")
    return EXIT_OK


def cmd_stats(args) -> int:
    ds = load_squad_json(args.dataset)
    stats = dataset_stats(ds).to_dict()
    if getattr(args, "format", "json") == "json":
        print(json.dumps(stats, indent=2, sort_keys=True))
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = list(stats)
    writer.writerow(keys)
    writer.writerow(["" if stats[k] is None else repr(stats[k]) for k in keys])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ------------------------------------------------------------------ simulate

_SIM_KEYS = {"pool", "holdout", "generalization", "strategy", "batch_fraction",
             "metric", "saturation_threshold", "seeds", "max_iterations",
             "train", "scorer"}
_STRATEGY_KEYS = {"kind", "within_rule", "questions_per_context", "n_contexts"}
_TRAIN_KEYS = {"epochs", "learning_rate", "window", "max_span_len", "seed"}
_SCORER_KEYS = {"kind", "command", "timeout", "model"}


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise UsageError(f"{where}: unknown keys {sorted(unknown)}")


def _load_sim_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: config is not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    _check_keys(cfg, _SIM_KEYS, path)
    for key in ("pool", "holdout", "strategy"):
        if key not in cfg:
            raise UsageError(f"{path}: config needs {key!r}")
    return cfg


def _build_sim(cfg: dict, seed_flag: int | None) -> tuple[StrategySpec, ScorerHandle, SimulationConfig]:
    strat_cfg = cfg["strategy"]
    if not isinstance(strat_cfg, dict) or "kind" not in strat_cfg:
        raise UsageError("config 'strategy' must be an object with a 'kind'")
    _check_keys(strat_cfg, _STRATEGY_KEYS, "strategy")
    train_cfg = cfg.get("train", {})
    _check_keys(train_cfg, _TRAIN_KEYS, "train")
    scorer_cfg = cfg.get("scorer", {"kind": "baseline"})
    _check_keys(scorer_cfg, _SCORER_KEYS, "scorer")

    seeds = cfg.get("seeds", (0, 1, 2))
    if seed_flag is not None:
        seeds = [seed_flag + i for i in range(len(seeds))]
    try:
        strategy = StrategySpec(
            kind=strat_cfg["kind"],
            seed=int(seeds[0]),
            within_rule=strat_cfg.get("within_rule", "random"),
            questions_per_context=strat_cfg.get("questions_per_context"),
            n_contexts=strat_cfg.get("n_contexts"),
        )
        train = TrainConfig(**train_cfg)
        handle = ScorerHandle(
            kind=scorer_cfg.get("kind", "baseline"),
            train_config=train,
            model_path=scorer_cfg.get("model"),
            command=tuple(shlex.split(scorer_cfg["command"])
                          if isinstance(scorer_cfg.get("command"), str)
                          else scorer_cfg.get("command", ())),
            timeout=float(scorer_cfg.get("timeout", 30.0)),
        )
        sim = SimulationConfig(
            strategy=strategy,
            scorer=handle,
            batch_fraction=float(cfg.get("batch_fraction", 0.015)),
            metric=cfg.get("metric", "f1"),
            saturation_threshold=float(cfg.get("saturation_threshold", 0.995)),
            seeds=tuple(seeds),
            max_iterations=cfg.get("max_iterations"),
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad simulation config: {exc}") from exc
    return strategy, handle, sim


def _read_reference(path: str, eval_names: list[str]) -> dict[str, EvalResult] | None:
    """Cached full-data reference, or None when absent or unusable."""
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        reference = {
            name: EvalResult(exact_match=float(v["exact_match"]), f1=float(v["f1"]),
                             n_samples=int(v["n_samples"]), n_missing=int(v["n_missing"]))
            for name, v in raw.items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return None
    if not set(eval_names) <= set(reference):
        return None
    return reference


def _write_reference(path: str, reference: dict[str, EvalResult]) -> None:
    payload = {
        name: {"exact_match": r.exact_match, "f1": r.f1,
               "n_samples": r.n_samples, "n_missing": r.n_missing}
        for name, r in reference.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _load_sim_config(args.config)
    strategy, handle, sim = _build_sim(cfg, getattr(args, "seed", None))

    pool_ds = load_squad_json(cfg["pool"])
    holdout = load_squad_json(cfg["holdout"], role="dev")
    gen_cfg = cfg.get("generalization", {})
    if not isinstance(gen_cfg, dict):
        raise UsageError("config 'generalization' must map eval set names to file paths")
    gens = {name: load_squad_json(p, role="test") for name, p in sorted(gen_cfg.items())}

    os.makedirs(args.out, exist_ok=True)
    ref_path = os.path.join(args.out, "reference.json")
    eval_names = [IN_DOMAIN, *sorted(gens)]
    reference = _read_reference(ref_path, eval_names)
    if reference is None:
        reference = run_full_reference(pool_ds, {IN_DOMAIN: holdout, **gens}, handle,
                                       seed=sim.seeds[0])
        _write_reference(ref_path, reference)

    curve = run_simulation(pool_ds, holdout, gens, sim, reference=reference,
                           jobs=getattr(args, "jobs", 1))
    report = build_saturation_report(curve)
    paths = export_report(curve, report, args.out)
    worklist_path = os.path.join(args.out, "worklist.csv")
    export_worklist(SelectionBatch(curve.batch_order, strategy), pool_ds, worklist_path)

    print(json.dumps({
        "curve": paths["curve"],
        "saturation": paths["saturation"],
        "worklist": worklist_path,
        "reference": ref_path,
        "saturation_fractions": {name: e.fraction for name, e in report.entries.items()},
    }, indent=2, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- select

def _needs_scores(kind: str, within: str) -> bool:
    if kind in ("uncertainty", "difficulty"):
        return True
    return kind in ("context_roundrobin", "per_context_quota") and within == "uncertainty"


def _select_scorer(args, seed: int):
    if args.model:
        try:
            model = BaselineModel.load(args.model)
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{args.model}: not a usable model file ({exc})") from exc
        return BaselineScorer(model=model)
    if args.train_on:
        train_ds = load_squad_json(args.train_on)
        scorer = BaselineScorer(train_config=TrainConfig(seed=seed))
        scorer.retrain(list(train_ds.samples), train_ds.contexts, seed=seed)
        return scorer
    if args.backend:
        handle = ScorerHandle(kind="external", command=tuple(shlex.split(args.backend)))
        return handle.create()
    raise UsageError(f"strategy {args.strategy!r} with --within {args.within!r} "
                     "needs --model, --train-on, or --backend")


def cmd_select(args) -> int:
    seed = getattr(args, "seed", 0)
    ds = load_squad_json(args.dataset)
    validate_dataset(ds)

    pool = PoolState.fresh(ds)
    if args.labeled:
        with open(args.labeled, "r", encoding="utf-8") as fh:
            ids = [line.strip() for line in fh if line.strip()]
        try:
            pool = pool.with_labeled(ids)
        except ValueError as exc:
            raise CorpusError(f"{args.labeled}: {exc}") from exc

    kind = args.strategy
    if kind == "per_context_quota":
        if not args.questions_per_context or not args.n_contexts:
            raise UsageError("per_context_quota needs --questions-per-context and --n-contexts")
    elif args.k is None or args.k < 1:
        raise UsageError(f"strategy {kind!r} needs --k >= 1")

    scorer = None
    scores = None
    labels = None
    try:
        if _needs_scores(kind, args.within):
            scorer = _select_scorer(args, seed)
            unlabeled = set(pool.unlabeled)
            targets = [s for s in ds.samples
                       if kind == "per_context_quota" or s.sample_id in unlabeled]
            pairs = scorer.score_pool(targets, ds.contexts)
            scores = {sid: uncertainty(pair.full) for sid, pair in pairs.items()}
            if kind == "difficulty":
                labels = {sid: classify_difficulty(sid, pair) for sid, pair in pairs.items()}
        if kind == "random":
            batch = select_random(pool, args.k, seed=seed)
        elif kind == "uncertainty":
            batch = select_uncertainty(pool, args.k, scores, seed=seed)
        elif kind == "difficulty":
            batch = select_difficulty(pool, args.k, labels, seed=seed)
        elif kind == "context_roundrobin":
            batch = select_context_roundrobin(pool, args.k, ds, within_rule=args.within,
                                              seed=seed, scores=scores)
        else:
            batch = select_per_context_quota(ds, args.questions_per_context,
                                             args.n_contexts, within_rule=args.within,
                                             seed=seed, scores=scores)
        if args.save_model:
            if not (args.train_on and isinstance(scorer, BaselineScorer) and scorer.model):
                raise UsageError("--save-model needs --train-on")
            scorer.model.save(args.save_model)
    finally:
        if scorer is not None:
            scorer.close()

    export_worklist(batch, ds, args.output, labels)
    note = f" (shortfall {batch.shortfall})" if batch.shortfall else ""
    print(f"wrote {args.output}: {len(batch.sample_ids)} rows{note}")
    return EXIT_OK


# ---------------------------------------------------------- protocol / report

def cmd_protocol_check(args) -> int:
    violations = run_protocol_check(args.backend, timeout=args.timeout)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        print(f"{len(violations)} violation(s)")
        return EXIT_SCORER
    print("ok: backend conforms to protocol v1")
    return EXIT_OK


def _load_saturation(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("metric", "threshold", "strategy", "eval_sets"):
        if key not in obj:
            raise CorpusError(f"{path}: not a saturation report (missing {key!r})")
    return obj


def cmd_report(args) -> int:
    reports = [_load_saturation(p) for p in args.saturation]

    settings = {(r["metric"], r["threshold"]) for r in reports}
    if len(settings) > 1:
        raise CorpusError("reports disagree on metric or threshold; refusing to compare")
    by_strategy: dict[str, dict] = {}
    for path, r in zip(args.saturation, reports):
        name = r["strategy"]
        if name in by_strategy:
            raise CorpusError(f"{path}: duplicate strategy {name!r}")
        by_strategy[name] = r

    refs: dict[str, float] = {}
    for r in by_strategy.values():
        for es, entry in r["eval_sets"].items():
            if es in refs and abs(refs[es] - entry["reference"]) > 1e-9:
                raise CorpusError(f"reports disagree on the {es!r} reference; "
                                  "they come from different runs")
            refs[es] = entry["reference"]

    base = by_strategy.get(args.baseline)
    rows = []
    for name in sorted(by_strategy):
        r = by_strategy[name]
        for es in sorted(r["eval_sets"]):
            entry = r["eval_sets"][es]
            frac = entry["fraction"]
            savings = None
            if base is not None and es in base["eval_sets"]:
                base_frac = base["eval_sets"][es]["fraction"]
                if frac is not None and base_frac is not None:
                    savings = 100.0 * (base_frac - frac)
            rows.append((name, es, frac, entry["median"], savings))

    metric, threshold = next(iter(settings))
    if getattr(args, "format", "json") == "json":
        out = {
            "metric": metric,
            "threshold": threshold,
            "baseline": args.baseline if base is not None else None,
            "strategies": {
                name: {
                    "eval_sets": {
                        es: {"fraction": frac, "median": median, "savings_vs_baseline": savings}
                        for (n2, es, frac, median, savings) in rows if n2 == name
                    },
                    "gaps": by_strategy[name].get("gaps", {}),
                }
                for name in sorted(by_strategy)
            },
        }
        print(json.dumps(out, indent=2, sort_keys=True))
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("strategy", "eval_set", "fraction", "median", "savings_vs_baseline"))
    for name, es, frac, median, savings in rows:
        writer.writerow([name, es] + ["" if v is None else repr(v) for v in (frac, median, savings)])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ScorerError as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    raise SystemExit(main())
