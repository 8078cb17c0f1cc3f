"""
Disagreement signals on a confidently wrong generator
=====================================================

A generator that is wrong but certain looks identical to a correct one
from the inside: its own entropy and perplexity are flat. A second model
scoring the same answer in one prefill pass is not fooled: its mean
negative log-likelihood over the answer tokens (log-CMP) spikes exactly
on the bad answers.

This script builds that situation from scripted mock models and prints
the per-instance signal table.
"""

import math

from crossmodel import DecodeParams, MockBackend, signal_vector
from crossmodel.backend.mock import ScriptedModel, mock_tokenize


# A tiny scripted world: each prompt has one target answer. The generator
# believes every answer with probability 1 (one-hot, entropy 0). The
# verifier assigns high probability to good answers and very low
# probability to the two bad ones.
ANSWERS = {
    "Capital of France?": " Paris is the capital",
    "Largest planet?": " Jupiter by a wide margin",
    "Boiling point of water?": " around 300 celsius",     # confidently wrong
    "First element?": " hydrogen comes first",
    "Speed of light?": " roughly 3 km per hour",          # confidently wrong
    "Continents on Earth?": " seven continents in total",
}
BAD = {"Boiling point of water?", "Speed of light?"}
FILLER = " ..."


class AnswerModel(ScriptedModel):
    """Next-token model that walks each prompt's target answer, assigning
    the scripted probability to every target token."""

    def __init__(self, credence):
        self.credence = credence  # prompt -> probability of each answer token

    def distribution(self, context):
        for prompt, answer in ANSWERS.items():
            if not context.startswith(prompt):
                continue
            produced = context[len(prompt):]
            if not answer.startswith(produced) or len(produced) >= len(answer):
                continue
            piece = next(
                (t for t, s, _ in mock_tokenize(answer) if s == len(produced)), None
            )
            if piece is None:
                continue
            p = self.credence(prompt)
            return {piece: p} if p >= 1.0 else {piece: p, FILLER: 1.0 - p}
        return {FILLER: 1.0}


generator = MockBackend(
    "overconfident-gen",
    AnswerModel(lambda prompt: 1.0),          # believes everything it says
    generations=ANSWERS,
)
verifier = MockBackend(
    "skeptical-verifier",
    AnswerModel(lambda prompt: 0.02 if prompt in BAD else 0.9),
)

print(f"{'prompt':32s} {'log-CMP':>8s} {'CME':>6s} {'G-PPL':>6s} {'G-Ent':>6s}")
print("-" * 64)
for prompt in ANSWERS:
    answer = generator.generate(prompt, DecodeParams(max_new_tokens=8))
    scored = verifier.score_sequence(prompt, answer.text)
    rec = signal_vector(prompt, answer, scored)
    flag = "  <- confidently wrong" if prompt in BAD else ""
    print(
        f"{prompt:32s} {rec.log_cmp:8.3f} {rec.cme:6.3f}"
        f" {rec.log_gppl:6.3f} {rec.g_ent:6.3f}{flag}"
    )

print()
print("The generator's own signals (G-PPL, G-Ent) are zero everywhere: it")
print("is certain, including when wrong. The verifier's surprise separates")
print(f"the bad answers by a factor of exp({math.log(1/0.02) - math.log(1/0.9):.2f}) in per-token likelihood.")
