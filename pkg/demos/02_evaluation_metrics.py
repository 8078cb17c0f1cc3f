"""
Evaluating a correctness signal without thresholds
==================================================

Given per-instance suspicion scores and correctness labels, four views
answer "is this signal any good?":

  1. AUROC against weak-model incorrectness (threshold-free ranking quality)
  2. the routing curve and APGR, in both raw and normalized conventions
  3. the coverage-accuracy curve for abstention
  4. accuracy by signal quintile

This script builds a synthetic 200-instance evaluation where the signal
is informative but noisy, then prints all four.
"""

import random

from crossmodel import (
    LabeledScore,
    auroc,
    coverage_accuracy,
    pgr_curve,
    quintile_spread,
)

rng = random.Random(0)

# A weak model that is right 60% of the time, routed against a strong
# model at 85%. The signal is log-CMP-like: wrong answers usually (not
# always) score higher.
items = []
for i in range(200):
    weak_ok = rng.random() < 0.60
    strong_ok = rng.random() < 0.85
    base = 0.8 if not weak_ok else 0.2
    score = base + rng.gauss(0.0, 0.25)
    items.append(LabeledScore(f"q{i:03d}", score, weak_ok, strong_ok))

print(f"weak accuracy   : {sum(it.weak_correct for it in items) / len(items):.3f}")
print(f"strong accuracy : {sum(it.strong_correct for it in items) / len(items):.3f}")
print()

# 1. ranking quality
print(f"AUROC (weak incorrectness): {auroc(items):.3f}")

# 2. routing quality at every budget
curve = pgr_curve(items)
print(f"APGR raw        : {curve.apgr_raw:.3f}   (random routing ~ 0.5)")
print(f"APGR normalized : {curve.apgr_normalized:.3f}   (random 0, oracle 1)")
print(f"excluded        : {curve.excluded} (gap {curve.a_s - curve.a_w:.3f})")
print()
print("budget  routed-accuracy  gap-recovered")
for c, a, pgr in curve.points[:: len(curve.points) // 10]:
    print(f"  {c:4.2f}  {a:15.3f}  {pgr:13.3f}")
print()

# 3. abstention view: accuracy on the retained fraction
cov = coverage_accuracy(items)
print("coverage  retained-accuracy")
for coverage, accuracy in cov.points[:: len(cov.points) // 8]:
    print(f"    {coverage:4.2f}  {accuracy:17.3f}")
print(f"coverage-accuracy AUC: {cov.auc:.3f}")
print()

# 4. quintile bars: weak accuracy per signal bin (Q1 = least suspicious)
accs, spread = quintile_spread(items)
for q, acc in enumerate(accs, start=1):
    print(f"Q{q}: {'#' * round(acc * 40):40s} {acc:.3f}")
print(f"quintile spread (Q1 - Q5): {spread * 100:.0f}pp")
