"""End-to-end orchestration: cached generation and scoring, per-instance
signal assembly, and per-pair evaluation reports.

Everything here is deterministic given the cache state and run
configuration; reports contain no timestamps so a fully cache-served
re-run reproduces them byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import metrics
from .backend import Backend, BackendConfig, build_backend, load_backend_config
from .backend.types import GeneratedAnswer, ScoredSequence
from .datasets import Instance, TaskPreset, get_preset, judge_generation, load_dataset
from .errors import CapabilityError, ConfigError, DataError, DegenerateInputError, UndefinedMetricError
from .runstore import CacheKey, RunStore, canonical_json, digest_file, digest_text
from .signals import SIGNAL_FIELDS, SignalRecord, signal_vector, suspicion_score

TOOL_VERSION = "0.1.0"

DEFAULT_SIGNALS = ("log_cmp", "cme", "log_gppl", "g_ent", "log_cmp_final")


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    preset: str
    generator: Path
    verifiers: tuple[Path, ...]
    signals: tuple[str, ...] = DEFAULT_SIGNALS
    limit: int | None = None
    seed: int = 0
    out_dir: Path = Path("runs")
    gap_floor: float = 0.05
    parallel: int = 1

    def __post_init__(self) -> None:
        unknown = set(self.signals) - set(SIGNAL_FIELDS)
        if unknown:
            raise ConfigError(f"unknown signals: {sorted(unknown)}")
        if not self.verifiers:
            raise ConfigError("at least one verifier backend is required")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")


@dataclass
class RunContext:
    """Loaded, ready-to-execute form of a RunConfig."""

    config: RunConfig
    preset: TaskPreset
    instances: list[Instance]
    generator_cfg: BackendConfig
    verifier_cfgs: list[BackendConfig]
    generator: Backend
    verifiers: dict[str, Backend]
    store: RunStore
    run_id: str
    dataset_digest: str
    backends_digest: str


def prepare_run(config: RunConfig, store_root: Path | None = None) -> RunContext:
    preset = get_preset(config.preset)
    instances = load_dataset(config.dataset, limit=config.limit, seed=config.seed)
    generator_cfg = load_backend_config(config.generator)
    verifier_cfgs = [load_backend_config(p) for p in config.verifiers]
    ver_ids = [v.id for v in verifier_cfgs]
    if len(set(ver_ids)) != len(ver_ids):
        raise ConfigError("verifier backend ids must be distinct")
    dataset_digest = digest_file(config.dataset)
    backends_digest = digest_text(
        canonical_json([digest_file(p) for p in [config.generator, *config.verifiers]])
    )
    identity = canonical_json(
        {
            "dataset": dataset_digest,
            "backends": backends_digest,
            "preset": config.preset,
            "seed": config.seed,
            "limit": config.limit,
            "signals": list(config.signals),
            "tool_version": TOOL_VERSION,
        }
    )
    generator = build_backend(generator_cfg)
    # A self-pair (generator scored by itself) reuses the same handle so
    # generation-time and scoring-time behavior are identical by identity.
    verifiers = {
        cfg.id: generator if cfg.id == generator_cfg.id else build_backend(cfg)
        for cfg in verifier_cfgs
    }
    return RunContext(
        config=config,
        preset=preset,
        instances=instances,
        generator_cfg=generator_cfg,
        verifier_cfgs=verifier_cfgs,
        generator=generator,
        verifiers=verifiers,
        store=RunStore(store_root or config.out_dir / "store"),
        run_id=digest_text(identity)[:16],
        dataset_digest=dataset_digest,
        backends_digest=backends_digest,
    )


# --- cached backend calls ----------------------------------------------------


def cached_generate(store: RunStore, backend: Backend, backend_id: str,
                    prompt: str, params) -> GeneratedAnswer:
    key = CacheKey.for_generate(backend_id, prompt, params)
    hit = store.get(key)
    if hit is not None:
        return hit
    value = backend.generate(prompt, params)
    store.put(key, value)
    return value


def cached_score(store: RunStore, backend: Backend, backend_id: str,
                 prompt: str, answer: str) -> ScoredSequence:
    key = CacheKey.for_score(backend_id, prompt, answer)
    hit = store.get(key)
    if hit is not None:
        return hit
    value = backend.score_sequence(prompt, answer)
    store.put(key, value)
    return value


def cached_ptrue(store: RunStore, backend: Backend, backend_id: str,
                 prompt: str, answer: str) -> float:
    key = CacheKey.for_ptrue(backend_id, prompt, answer)
    hit = store.get(key)
    if hit is not None:
        return hit
    value = backend.judge_ptrue(prompt, answer)
    store.put(key, value)
    return value


def _map_instances(
    instances: Sequence[Instance],
    fn: Callable[[Instance], Any],
    parallel: int,
) -> dict[str, Any]:
    """Apply fn per instance, possibly in parallel; result keyed and
    deterministic regardless of completion order."""
    if parallel <= 1:
        return {inst.instance_id: fn(inst) for inst in instances}
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        results = pool.map(fn, instances)
        return {inst.instance_id: res for inst, res in zip(instances, results)}


def generate_answers(ctx: RunContext, backend_id: str) -> dict[str, GeneratedAnswer]:
    """One greedy answer per instance from the given backend, cache-backed."""
    backend = ctx.generator if backend_id == ctx.generator_cfg.id else ctx.verifiers[backend_id]
    decode = ctx.preset.decode

    def one(inst: Instance) -> GeneratedAnswer:
        return cached_generate(ctx.store, backend, backend_id, inst.prompt, decode)

    return _map_instances(ctx.instances, one, ctx.config.parallel)


@dataclass
class SignalsResult:
    records: list[SignalRecord]
    diagnostics: dict[str, int] = field(default_factory=dict)


def compute_signal_records(
    ctx: RunContext,
    verifier_id: str,
    generator_answers: dict[str, GeneratedAnswer],
    verifier_answers: dict[str, GeneratedAnswer] | None,
) -> SignalsResult:
    """Score every generator answer with the verifier and assemble one
    SignalRecord per instance.

    Correctness labels come from judging each model's answer against
    gold. Signals missing a capability (or a degenerate answer) stay
    None; counts land in diagnostics rather than being papered over.
    """
    verifier = ctx.verifiers[verifier_id]
    span = ctx.preset.answer_span
    want_ptrue = "p_true" in ctx.config.signals
    diagnostics: dict[str, int] = {}

    def bump(key: str) -> None:
        diagnostics[key] = diagnostics.get(key, 0) + 1

    def one(inst: Instance) -> SignalRecord:
        gen = generator_answers[inst.instance_id]
        gen_correct, flags = judge_generation(gen.text, inst.gold)
        for flag in flags:
            bump(flag)
        ver_correct = None
        if verifier_answers is not None:
            ver_correct, _ = judge_generation(verifier_answers[inst.instance_id].text, inst.gold)
        if not gen.text:
            bump("empty_generation")
            return SignalRecord(
                instance_id=inst.instance_id,
                generator_correct=gen_correct,
                verifier_correct=ver_correct,
            )
        scored = cached_score(ctx.store, verifier, verifier_id, inst.prompt, gen.text)
        ptrue = None
        if want_ptrue:
            try:
                ptrue = cached_ptrue(ctx.store, verifier, verifier_id, inst.prompt, gen.text)
            except CapabilityError:
                bump("ptrue_unresolvable")
        record = signal_vector(
            inst.instance_id,
            gen,
            scored,
            span=span,
            ptrue=ptrue,
            generator_correct=gen_correct,
            verifier_correct=ver_correct,
        )
        if span.mode == "final_answer" and record.log_cmp_final is None:
            bump("final_answer_span_missing")
        return record

    results = _map_instances(ctx.instances, one, ctx.config.parallel)
    records = [results[inst.instance_id] for inst in ctx.instances]
    return SignalsResult(records=records, diagnostics=diagnostics)


# --- evaluation ----------------------------------------------------------------


@dataclass
class SignalEval:
    signal: str
    n_scored: int
    auroc: float | None = None
    auroc_note: str | None = None
    apgr_raw: float | None = None
    apgr_normalized: float | None = None
    routing_excluded: bool | None = None
    routing_note: str | None = None
    coverage_auc: float | None = None
    coverage_points: list[tuple[float, float]] | None = None
    quintile_accuracies: list[float] | None = None
    quintile_spread: float | None = None
    case_means: dict[str, dict[str, float | int | None]] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "signal": self.signal,
            "n_scored": self.n_scored,
            "auroc": self.auroc,
            "auroc_note": self.auroc_note,
            "apgr_raw": self.apgr_raw,
            "apgr_normalized": self.apgr_normalized,
            "routing_excluded": self.routing_excluded,
            "routing_note": self.routing_note,
            "coverage_auc": self.coverage_auc,
            "coverage_points": self.coverage_points,
            "quintile_accuracies": self.quintile_accuracies,
            "quintile_spread": self.quintile_spread,
            "case_means": self.case_means,
        }


@dataclass
class EvalReport:
    generator_id: str
    verifier_id: str
    dataset_digest: str
    preset: str
    n: int
    weak_accuracy: float
    strong_accuracy: float | None
    gap: float | None
    guard: str
    warnings: list[str]
    signals: dict[str, SignalEval]

    def to_dict(self) -> dict[str, Any]:
        return {
            "generator_id": self.generator_id,
            "verifier_id": self.verifier_id,
            "dataset_digest": self.dataset_digest,
            "preset": self.preset,
            "n": self.n,
            "weak_accuracy": self.weak_accuracy,
            "strong_accuracy": self.strong_accuracy,
            "gap": self.gap,
            "guard": self.guard,
            "warnings": self.warnings,
            "signals": {name: ev.to_dict() for name, ev in sorted(self.signals.items())},
        }


def labeled_scores(records: Sequence[SignalRecord], signal: str) -> list[metrics.LabeledScore]:
    """Records with the signal present, oriented and labeled for metrics."""
    out = []
    for rec in records:
        value = suspicion_score(rec, signal)
        if value is None or rec.generator_correct is None:
            continue
        out.append(
            metrics.LabeledScore(
                instance_id=rec.instance_id,
                score=value,
                weak_correct=rec.generator_correct,
                strong_correct=rec.verifier_correct,
            )
        )
    return out


def _case_means_dict(records: Sequence[SignalRecord], signal: str) -> dict | None:
    try:
        cm = metrics.case_means(records, signal)
    except DataError:  # verifier labels absent on some instance
        return None
    return {
        name: {"mean_score": cell.mean_score, "n": cell.n}
        for name, cell in (
            ("both_correct", cm.both_correct),
            ("gen_only_wrong", cm.gen_only_wrong),
            ("ver_only_wrong", cm.ver_only_wrong),
            ("both_wrong", cm.both_wrong),
        )
    }


def evaluate_signal(records: Sequence[SignalRecord], signal: str, gap_floor: float) -> SignalEval:
    items = labeled_scores(records, signal)
    ev = SignalEval(signal=signal, n_scored=len(items))
    if not items:
        ev.auroc_note = "signal absent on all instances"
        return ev
    try:
        ev.auroc = metrics.auroc(items)
    except UndefinedMetricError as exc:
        ev.auroc_note = str(exc)
    if all(it.strong_correct is not None for it in items):
        try:
            curve = metrics.pgr_curve(items, gap_floor=gap_floor)
            ev.apgr_raw = curve.apgr_raw
            ev.apgr_normalized = curve.apgr_normalized
            ev.routing_excluded = curve.excluded
            ev.routing_note = curve.excluded_reason
        except (UndefinedMetricError, DegenerateInputError) as exc:
            ev.routing_note = str(exc)
    else:
        ev.routing_note = "strong labels absent; routing metrics skipped"
    cov = metrics.coverage_accuracy(items)
    ev.coverage_auc = cov.auc
    ev.coverage_points = [list(p) for p in cov.points]
    try:
        accs, spread = metrics.quintile_spread(items)
        ev.quintile_accuracies = accs
        ev.quintile_spread = spread
    except DegenerateInputError:
        pass
    ev.case_means = _case_means_dict(records, signal)
    return ev


def evaluate_pair(
    records: Sequence[SignalRecord],
    generator_id: str,
    verifier_id: str,
    dataset_digest: str,
    preset: str,
    signal_names: Iterable[str],
    gap_floor: float,
) -> EvalReport:
    n = len(records)
    labeled = [r for r in records if r.generator_correct is not None]
    weak_acc = sum(1 for r in labeled if r.generator_correct) / len(labeled) if labeled else 0.0
    strong_labeled = [r for r in records if r.verifier_correct is not None]
    strong_acc = (
        sum(1 for r in strong_labeled if r.verifier_correct) / len(strong_labeled)
        if len(strong_labeled) == n and n > 0
        else None
    )
    gap = strong_acc - weak_acc if strong_acc is not None else None
    guard = metrics.weak_generator_guard(weak_acc)
    warnings = []
    if guard == "warn":
        warnings.append(
            f"weak generator: accuracy {weak_acc:.3f} is below 0.10; "
            "disagreement signals are expected to be uninformative"
        )
    return EvalReport(
        generator_id=generator_id,
        verifier_id=verifier_id,
        dataset_digest=dataset_digest,
        preset=preset,
        n=n,
        weak_accuracy=weak_acc,
        strong_accuracy=strong_acc,
        gap=gap,
        guard=guard,
        warnings=warnings,
        signals={s: evaluate_signal(records, s, gap_floor) for s in signal_names},
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> dict[str, Any]:
    """Mean AUROC/APGR per signal across pairs, honoring the small-gap
    exclusion rule for APGR means."""
    signals: set[str] = set()
    for rep in reports:
        signals.update(rep.signals)
    per_signal: dict[str, Any] = {}
    for sig in sorted(signals):
        aurocs = [
            rep.signals[sig].auroc
            for rep in reports
            if sig in rep.signals and rep.signals[sig].auroc is not None
        ]
        apgr_rows = [
            rep.signals[sig]
            for rep in reports
            if sig in rep.signals
            and rep.signals[sig].apgr_raw is not None
            and rep.signals[sig].routing_excluded is False
        ]
        per_signal[sig] = {
            "mean_auroc": sum(aurocs) / len(aurocs) if aurocs else None,
            "n_auroc_pairs": len(aurocs),
            "mean_apgr_raw": (
                sum(r.apgr_raw for r in apgr_rows) / len(apgr_rows) if apgr_rows else None
            ),
            "mean_apgr_normalized": (
                sum(r.apgr_normalized for r in apgr_rows) / len(apgr_rows) if apgr_rows else None
            ),
            "n_apgr_pairs": len(apgr_rows),
        }
    excluded_pairs = [
        {
            "generator_id": rep.generator_id,
            "verifier_id": rep.verifier_id,
            "gap": rep.gap,
            "signals": sorted(
                s for s, ev in rep.signals.items() if ev.routing_excluded
            ),
        }
        for rep in reports
        if any(ev.routing_excluded for ev in rep.signals.values())
    ]
    return {
        "n_pairs": len(reports),
        "per_signal": per_signal,
        "excluded_pairs": excluded_pairs,
        "warnings": sorted({w for rep in reports for w in rep.warnings}),
    }


def write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
