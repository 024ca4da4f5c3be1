"""Cost-effective annotation planning for extractive QA datasets.

The package simulates pool-based labeling strategies against a cheap
trainable span scorer (or any external scorer speaking the line-delimited
JSON protocol in qaplan.external), detects where learning curves saturate
relative to a full-data reference, and turns the findings into ranked
annotation worklists.
"""

from .baseline import (BaselineModel, FeatureConfig, Featurizer, TrainConfig,
                       featurize, train_baseline)
from .corpus import (AnswerSpan, ContextDoc, CorpusError, Dataset,
                     DatasetStats, PoolState, Sample, SquadParseError, Token,
                     dataset_stats, filter_long_answers, load_squad_json,
                     save_squad_json, split_by_context, to_squad_dict,
                     tokenize, truncate_question, validate_dataset)
from .external import (PROTOCOL_VERSION, ExternalScorer, ProtocolError,
                       golden_requests, run_protocol_check)
from .kernels import backend_name
from .metrics import EvalResult, evaluate, exact_match, normalize_answer, token_f1
from .scorer import (BaselineScorer, PredictionPair, ScorerError, ScorerHandle,
                     SpanPrediction, decode_best_span, entropy, predict,
                     score_pool, softmax, uncertainty)
from .simulation import (IN_DOMAIN, CurvePoint, LearningCurve, SaturationEntry,
                         SaturationReport, SimulationConfig, StrategyComparison,
                         batch_schedule, build_saturation_report,
                         compare_strategies, detect_saturation,
                         export_curve_csv, export_report,
                         export_saturation_json, run_full_reference,
                         run_simulation, saturation_gap)
from .strategies import (STRATEGY_KINDS, WITHIN_RULES, DifficultyLabel,
                         SelectionBatch, StrategySpec, classify_difficulty,
                         export_worklist, select_context_roundrobin,
                         select_difficulty, select_per_context_quota,
                         select_random, select_uncertainty)
from .synthetic import (build_corpus, generalization_set, holdout_set,
                        planning_pool)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # corpus
    "Token", "ContextDoc", "AnswerSpan", "Sample", "Dataset", "DatasetStats",
    "PoolState", "CorpusError", "SquadParseError", "tokenize",
    "truncate_question", "load_squad_json", "save_squad_json", "to_squad_dict",
    "filter_long_answers", "split_by_context", "dataset_stats",
    "validate_dataset",
    # metrics
    "EvalResult", "normalize_answer", "exact_match", "token_f1", "evaluate",
    # kernels
    "backend_name",
    # baseline
    "FeatureConfig", "TrainConfig", "Featurizer", "BaselineModel", "featurize",
    "train_baseline",
    # scorer
    "ScorerError", "SpanPrediction", "PredictionPair", "BaselineScorer",
    "ScorerHandle", "softmax", "entropy", "uncertainty", "decode_best_span",
    "predict", "score_pool",
    # external protocol
    "PROTOCOL_VERSION", "ExternalScorer", "ProtocolError", "golden_requests",
    "run_protocol_check",
    # strategies
    "STRATEGY_KINDS", "WITHIN_RULES", "StrategySpec", "SelectionBatch",
    "DifficultyLabel", "select_random", "select_uncertainty",
    "select_difficulty", "select_context_roundrobin",
    "select_per_context_quota", "classify_difficulty", "export_worklist",
    # simulation
    "IN_DOMAIN", "SimulationConfig", "CurvePoint", "LearningCurve",
    "batch_schedule", "run_simulation", "run_full_reference",
    "detect_saturation", "SaturationEntry", "SaturationReport",
    "build_saturation_report", "saturation_gap", "StrategyComparison",
    "compare_strategies", "export_curve_csv", "export_saturation_json",
    "export_report",
    # synthetic corpora
    "build_corpus", "planning_pool", "holdout_set", "generalization_set",
]
