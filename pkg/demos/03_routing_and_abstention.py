"""
Label-free routing: calibrate on yesterday, route today
=======================================================

Routing needs a threshold, but no labels are available. The fix:
take the signal's empirical quantile at the target budget on any
unlabeled calibration batch, then route new traffic with strict-greater
comparisons against that threshold.

This script calibrates at a 30% budget on one batch, routes a second
batch, and compares cost/quality against always-weak and always-strong.
It then reuses the same machinery as an abstention policy.
"""

import random

from crossmodel import RoutePolicy, SignalRecord, abstain_batch, calibrate_threshold, route_batch

rng = random.Random(7)


def make_batch(n, tag):
    records, weak_answers, strong_answers = [], {}, {}
    for i in range(n):
        iid = f"{tag}{i:03d}"
        weak_ok = rng.random() < 0.55
        strong_ok = rng.random() < 0.90
        score = (0.9 if not weak_ok else 0.3) + rng.gauss(0.0, 0.2)
        records.append(
            SignalRecord(iid, log_cmp=score,
                         generator_correct=weak_ok, verifier_correct=strong_ok)
        )
        weak_answers[iid] = f"weak answer {i}"
        strong_answers[iid] = f"strong answer {i}"
    return records, weak_answers, strong_answers


calibration, _, _ = make_batch(400, "cal")
live, weak_ans, strong_ans = make_batch(300, "live")

# 1. label-free threshold: the (1 - budget) quantile of calibration scores
budget = 0.30
threshold = calibrate_threshold([r.log_cmp for r in calibration], budget)
print(f"calibrated threshold at budget {budget:.0%}: {threshold:.3f}")

# 2. route live traffic with the frozen threshold
policy = RoutePolicy("log_cmp", threshold=threshold)
routed = route_batch(policy, live, weak_ans, strong_ans)
weak_acc = sum(1 for r in live if r.generator_correct) / len(live)
strong_acc = sum(1 for r in live if r.verifier_correct) / len(live)
print()
print(f"always weak  : accuracy {weak_acc:.3f}, strong-model cost 0%")
print(
    f"routed       : accuracy {routed.routed_accuracy:.3f},"
    f" strong-model cost {routed.routed_fraction:.0%}"
)
print(f"always strong: accuracy {strong_acc:.3f}, strong-model cost 100%")

recovered = (routed.routed_accuracy - weak_acc) / (strong_acc - weak_acc)
print(f"gap recovered at {routed.routed_fraction:.0%} cost: {recovered:.0%}")

# 3. same signal as an abstention trigger: answer only when confident
print()
print("abstention sweep (serve weak answers, abstain on the most suspicious):")
print("budget  answered  accuracy-on-answered")
for b in (0.0, 0.1, 0.2, 0.3, 0.5):
    result = abstain_batch(RoutePolicy("log_cmp", budget=b), live, weak_ans)
    print(f"  {b:4.2f}  {1 - result.abstained_fraction:8.0%}"
          f"  {result.retained_accuracy:20.3f}")
