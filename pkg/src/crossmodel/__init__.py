"""crossmodel: label-free correctness signals from verifier prefill scoring.

A generating model's greedy answer is scored by a second model in a
single prefill pass; the verifier's surprise (mean negative
log-likelihood over answer tokens) and uncertainty (mean entropy) are
then used to predict correctness, to route hard queries to a stronger
model, or to abstain.
"""

from .backend import (
    Backend,
    BackendCapabilities,
    BackendConfig,
    DecodeParams,
    EntropySupport,
    GeneratedAnswer,
    HTTPBackend,
    MockBackend,
    ScoredSequence,
    SeededModel,
    TokenScore,
    UniformModel,
    build_backend,
    load_backend_config,
)
from .datasets import GoldAnswer, Instance, TaskPreset, extract_answer, judge, load_dataset
from .metrics import (
    CaseMeans,
    CorrelationResult,
    CoverageAccuracyCurve,
    LabeledScore,
    RoutingCurve,
    auroc,
    case_means,
    coverage_accuracy,
    pgr_curve,
    quintile_spread,
    spearman,
    weak_generator_guard,
)
from .pipeline import EvalReport, RunConfig, TOOL_VERSION, evaluate_pair
from .routing import RoutePolicy, RouteDecision, abstain_batch, calibrate_threshold, route_batch
from .runstore import CacheKey, RunManifest, RunStore
from .signals import (
    AnswerSpan,
    SignalRecord,
    cme,
    cmp,
    cmp_final,
    g_ent,
    g_ppl,
    signal_vector,
    suspicion_score,
)

__version__ = TOOL_VERSION

__all__ = [
    "AnswerSpan",
    "Backend",
    "BackendCapabilities",
    "BackendConfig",
    "CacheKey",
    "CaseMeans",
    "CorrelationResult",
    "CoverageAccuracyCurve",
    "DecodeParams",
    "EntropySupport",
    "EvalReport",
    "GeneratedAnswer",
    "GoldAnswer",
    "HTTPBackend",
    "Instance",
    "LabeledScore",
    "MockBackend",
    "RouteDecision",
    "RoutePolicy",
    "RoutingCurve",
    "RunConfig",
    "RunManifest",
    "RunStore",
    "ScoredSequence",
    "SeededModel",
    "SignalRecord",
    "TaskPreset",
    "TokenScore",
    "UniformModel",
    "auroc",
    "abstain_batch",
    "build_backend",
    "calibrate_threshold",
    "case_means",
    "cme",
    "cmp",
    "cmp_final",
    "coverage_accuracy",
    "evaluate_pair",
    "extract_answer",
    "g_ent",
    "g_ppl",
    "judge",
    "load_backend_config",
    "load_dataset",
    "pgr_curve",
    "quintile_spread",
    "route_batch",
    "signal_vector",
    "spearman",
    "suspicion_score",
    "weak_generator_guard",
]
