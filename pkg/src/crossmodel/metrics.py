"""Threshold-free and routing-based evaluation of scalar signals.

Every function takes scores oriented so that HIGHER means MORE
SUSPICIOUS (more likely incorrect). The positive class for AUROC is
"weak model incorrect".

A single canonical ordering underlies everything rank-based: items
sorted by score descending with ties broken by instance_id ascending
("route the most suspicious first"). Ascending orderings (coverage
retention, quintiles) are the exact reversal, which makes routing,
abstention, and coverage curves mutually consistent at every budget.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as _sstats

from .errors import DataError, DegenerateInputError, UndefinedMetricError
from .signals import SignalRecord


@dataclass(frozen=True)
class LabeledScore:
    """One instance's suspicion score plus correctness labels.

    strong_correct is only needed for routing metrics.
    """

    instance_id: str
    score: float
    weak_correct: bool
    strong_correct: bool | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class RoutingCurve:
    points: tuple[tuple[float, float, float], ...]  # (c, a_c, pgr_c)
    a_w: float
    a_s: float
    apgr_raw: float
    apgr_normalized: float
    excluded: bool
    excluded_reason: str | None = None


@dataclass(frozen=True)
class CoverageAccuracyCurve:
    points: tuple[tuple[float, float], ...]  # (coverage, accuracy)
    auc: float


@dataclass(frozen=True)
class CellStat:
    mean_score: float | None
    n: int


@dataclass(frozen=True)
class CaseMeans:
    both_correct: CellStat
    gen_only_wrong: CellStat
    ver_only_wrong: CellStat
    both_wrong: CellStat


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int
    method: str


def ranked_descending(items: Sequence[LabeledScore]) -> list[LabeledScore]:
    """Canonical suspicion order: score descending, instance_id ascending."""
    return sorted(items, key=lambda it: (-it.score, it.instance_id))


def midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties assigned the midrank of their run.

    Midranks of a run spanning positions a..b (1-based) equal (a + b) / 2,
    which is always an exact multiple of 0.5 in floating point.
    """
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + 1 + j + 1) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def auroc(items: Sequence[LabeledScore]) -> float:
    """Area under the ROC curve for predicting weak-model incorrectness.

    Computed as the Mann-Whitney statistic with midrank tie handling,
    i.e. P(score_incorrect > score_correct) + 0.5 P(equal).
    """
    positives = [not it.weak_correct for it in items]
    n_pos = sum(positives)
    n_neg = len(items) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC undefined: {n_pos} incorrect vs {n_neg} correct instances"
        )
    ranks = midranks([it.score for it in items])
    rank_sum = sum(r for r, pos in zip(ranks, positives) if pos)
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def trapezoid(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Trapezoidal integral of ys over xs."""
    return sum(
        (ys[i] + ys[i + 1]) / 2 * (xs[i + 1] - xs[i]) for i in range(len(xs) - 1)
    )


def apgr_raw_from_pgr_points(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal average of PGR over routed fractions spanning [0, 1]."""
    cs = [c for c, _ in points]
    pgrs = [p for _, p in points]
    if cs[0] != 0.0 or cs[-1] != 1.0:
        raise ValueError("PGR points must span c in [0, 1]")
    return trapezoid(cs, pgrs)


def _routed_accuracies(order: Sequence[LabeledScore]) -> list[float]:
    """a(k/n) for k = 0..n when the first k items of `order` are routed."""
    n = len(order)
    weak = [1.0 if it.weak_correct else 0.0 for it in order]
    strong = [1.0 if it.strong_correct else 0.0 for it in order]
    accs = []
    routed = 0.0
    kept = sum(weak)
    for k in range(n + 1):
        accs.append((routed + kept) / n)
        if k < n:
            routed += strong[k]
            kept -= weak[k]
    return accs


def oracle_scores(items: Sequence[LabeledScore]) -> list[LabeledScore]:
    """Items rescored so that exactly the weak-incorrect ones rank first."""
    return [
        LabeledScore(it.instance_id, 0.0 if it.weak_correct else 1.0,
                     it.weak_correct, it.strong_correct)
        for it in items
    ]


def pgr_curve(items: Sequence[LabeledScore], gap_floor: float = 0.05) -> RoutingCurve:
    """Routing curve over all integer budgets, with both APGR conventions.

    apgr_raw averages PGR(c) over c (random ordering scores ~0.5);
    apgr_normalized rescales so random scores 0 and oracle routing
    (weak-incorrect items first) scores 1. Pairs whose accuracy gap is
    below gap_floor are flagged excluded; with the floor disabled a zero
    gap raises instead of dividing by it.
    """
    if len(items) < 2:
        raise DegenerateInputError("routing curve requires at least 2 items")
    if any(it.strong_correct is None for it in items):
        raise DataError("strong_correct required on every item for routing metrics")
    order = ranked_descending(items)
    n = len(order)
    accs = _routed_accuracies(order)
    a_w, a_s = accs[0], accs[-1]
    gap = a_s - a_w
    excluded = abs(gap) < gap_floor
    if gap == 0.0:
        if not excluded:
            raise UndefinedMetricError("zero accuracy gap with exclusion disabled")
        nan = float("nan")
        points = tuple((k / n, accs[k], nan) for k in range(n + 1))
        return RoutingCurve(points, a_w, a_s, nan, nan, True, "zero accuracy gap")

    pgrs = [(a - a_w) / gap for a in accs]
    cs = [k / n for k in range(n + 1)]
    raw = trapezoid(cs, pgrs)

    oracle_order = ranked_descending(oracle_scores(items))
    oracle_accs = _routed_accuracies(oracle_order)
    oracle_raw = trapezoid(cs, [(a - a_w) / gap for a in oracle_accs])
    if abs(oracle_raw - 0.5) < 1e-15:
        normalized = float("nan")
        reason = "oracle routing no better than random"
        excluded = True
    else:
        normalized = (raw - 0.5) / (oracle_raw - 0.5)
        reason = f"accuracy gap {abs(gap):.4f} below floor {gap_floor}" if excluded else None
    points = tuple((c, a, p) for c, a, p in zip(cs, accs, pgrs))
    return RoutingCurve(points, a_w, a_s, raw, normalized, excluded, reason)


def coverage_accuracy(items: Sequence[LabeledScore]) -> CoverageAccuracyCurve:
    """Weak-model accuracy on the k least-suspicious items, k = 1..n."""
    if not items:
        raise DegenerateInputError("coverage curve requires at least 1 item")
    ascending = list(reversed(ranked_descending(items)))
    n = len(ascending)
    points = []
    correct = 0
    for k, it in enumerate(ascending, start=1):
        correct += 1 if it.weak_correct else 0
        points.append((k / n, correct / k))
    auc = trapezoid([c for c, _ in points], [a for _, a in points]) if n > 1 else 0.0
    return CoverageAccuracyCurve(tuple(points), auc)


def quintile_spread(items: Sequence[LabeledScore]) -> tuple[list[float], float]:
    """Weak accuracy in 5 contiguous score bins (Q1 lowest) and Q1 - Q5.

    Bin sizes differ by at most one, with earlier bins taking extras.
    """
    n = len(items)
    if n < 5:
        raise DegenerateInputError(f"quintiles require n >= 5, got {n}")
    ascending = list(reversed(ranked_descending(items)))
    base, extra = divmod(n, 5)
    accs: list[float] = []
    idx = 0
    for b in range(5):
        size = base + (1 if b < extra else 0)
        bin_items = ascending[idx : idx + size]
        idx += size
        accs.append(sum(1 for it in bin_items if it.weak_correct) / size)
    return accs, accs[0] - accs[4]


def case_means(
    records: Sequence[SignalRecord],
    selector: str | Callable[[SignalRecord], float | None],
) -> CaseMeans:
    """Mean signal value in each (generator, verifier) outcome cell.

    CMP-family signals are averaged in log space; exponentiate for
    display only.
    """
    if isinstance(selector, str):
        name = selector
        select: Callable[[SignalRecord], float | None] = lambda r: getattr(r, name)
    else:
        select = selector
    cells: dict[str, list[float]] = {
        "both_correct": [], "gen_only_wrong": [], "ver_only_wrong": [], "both_wrong": []
    }
    counts = dict.fromkeys(cells, 0)
    for rec in records:
        if rec.generator_correct is None or rec.verifier_correct is None:
            raise DataError(f"instance {rec.instance_id}: missing correctness labels")
        if rec.generator_correct and rec.verifier_correct:
            cell = "both_correct"
        elif not rec.generator_correct and rec.verifier_correct:
            cell = "gen_only_wrong"
        elif rec.generator_correct and not rec.verifier_correct:
            cell = "ver_only_wrong"
        else:
            cell = "both_wrong"
        counts[cell] += 1
        value = select(rec)
        if value is not None:
            cells[cell].append(value)
    def stat(cell: str) -> CellStat:
        vals = cells[cell]
        return CellStat(sum(vals) / len(vals) if vals else None, counts[cell])
    return CaseMeans(
        both_correct=stat("both_correct"),
        gen_only_wrong=stat("gen_only_wrong"),
        ver_only_wrong=stat("ver_only_wrong"),
        both_wrong=stat("both_wrong"),
    )


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    ax, ay = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    ax -= ax.mean()
    ay -= ay.mean()
    denom = math.sqrt(float(ax @ ax) * float(ay @ ay))
    return float(ax @ ay) / denom


def spearman(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    """Spearman rank correlation with midrank ties.

    The p-value is an exact permutation test for n <= 8 and the usual
    t-approximation above that; the method used is recorded in the result.
    """
    n = len(xs)
    if n != len(ys):
        raise ValueError("xs and ys must have equal length")
    if n < 3:
        raise DegenerateInputError(f"correlation requires n >= 3, got {n}")
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        raise UndefinedMetricError("correlation undefined for a constant vector")
    rx, ry = midranks(xs), midranks(ys)
    rho = _pearson(rx, ry)

    if n <= 8:
        threshold = abs(rho) - 1e-12
        hits = 0
        total = 0
        for perm in itertools.permutations(ry):
            total += 1
            if abs(_pearson(rx, perm)) >= threshold:
                hits += 1
        return CorrelationResult(rho, hits / total, n, "exact_permutation")

    if abs(rho) >= 1.0:
        return CorrelationResult(rho, 0.0, n, "t_approximation")
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(_sstats.t.sf(abs(t), df=n - 2))
    return CorrelationResult(rho, min(p, 1.0), n, "t_approximation")


def weak_generator_guard(weak_accuracy: float) -> str:
    """"warn" when the generator is too weak for disagreement signals to
    carry information (below 10% accuracy), else "ok". Advisory only."""
    if not 0.0 <= weak_accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {weak_accuracy}")
    return "warn" if weak_accuracy < 0.10 else "ok"
