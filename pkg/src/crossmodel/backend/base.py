"""Backend interface plus scoring math shared by all implementations."""

from __future__ import annotations

import abc
import math
from typing import Iterable, Mapping

from ..errors import CapabilityError
from .types import BackendCapabilities, DecodeParams, GeneratedAnswer, ScoredSequence

# Verification template, fixed for v1. The yes/no tokens are scored at the
# position immediately following the trailing "Answer:".
PTRUE_TEMPLATE = (
    "{prompt}\nProposed answer: {answer}\n"
    "Is the proposed answer correct? Yes or No.\nAnswer:"
)


def ptrue_prompt(prompt: str, answer: str) -> str:
    return PTRUE_TEMPLATE.format(prompt=prompt, answer=answer)


def entropy_of(dist: Mapping[str, float] | Iterable[float]) -> float:
    """Shannon entropy in nats of a full probability distribution."""
    probs = dist.values() if isinstance(dist, Mapping) else dist
    h = 0.0
    for p in probs:
        if p > 0.0:
            h -= p * math.log(p)
    return h


def topk_entropy(top_logprobs: Iterable[float]) -> float:
    """Entropy of the distribution formed by the echoed top-k tokens plus a
    single residual pseudo-token holding the unobserved mass.

    This is a deterministic lower-biased stand-in for the exact entropy
    when a backend only echoes k logprobs per position.
    """
    probs = [math.exp(lp) for lp in top_logprobs]
    residual = max(0.0, 1.0 - sum(probs))
    return entropy_of(probs + [residual])


def _yes_no_mass(dist: Mapping[str, float]) -> tuple[float, float]:
    p_yes = 0.0
    p_no = 0.0
    for token, p in dist.items():
        norm = token.strip().lower()
        if norm == "yes":
            p_yes += p
        elif norm == "no":
            p_no += p
    return p_yes, p_no


def ptrue_from_distribution(dist: Mapping[str, float]) -> float:
    """p(yes) / (p(yes) + p(no)) over the next-token distribution, summing
    probability across case variants of each word."""
    p_yes, p_no = _yes_no_mass(dist)
    if p_yes == 0.0 and p_no == 0.0:
        raise CapabilityError(
            "neither a yes-token nor a no-token is resolvable in the scorer's echo"
        )
    return p_yes / (p_yes + p_no)


class Backend(abc.ABC):
    """A model behind two capabilities: greedy generation and prefill
    scoring of a fixed (prompt, answer) pair.

    Handles are shareable across threads; each call is internally
    sequential and independent calls may overlap.
    """

    @abc.abstractmethod
    def capabilities(self) -> BackendCapabilities: ...

    @abc.abstractmethod
    def generate(self, prompt: str, params: DecodeParams) -> GeneratedAnswer: ...

    @abc.abstractmethod
    def score_sequence(self, prompt: str, answer: str) -> ScoredSequence: ...

    @abc.abstractmethod
    def _next_token_distribution(self, context: str) -> Mapping[str, float]:
        """Probability mass over candidate next tokens after `context`, as
        observable by this backend (full vocabulary or top-k echo)."""

    def judge_ptrue(self, prompt: str, answer: str) -> float:
        """Probability the model answers Yes when asked whether `answer`
        is correct, renormalized over the yes/no pair."""
        if not self.capabilities().can_score:
            raise CapabilityError("backend cannot score; judge_ptrue unavailable")
        dist = self._next_token_distribution(ptrue_prompt(prompt, answer))
        return ptrue_from_distribution(dist)
