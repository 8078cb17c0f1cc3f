"""JSON encoding for backend value types stored in caches and run files."""

from __future__ import annotations

from typing import Any

from .backend.types import EntropySupport, GeneratedAnswer, ScoredSequence, TokenScore


def token_score_to_dict(ts: TokenScore) -> dict[str, Any]:
    return {
        "token_text": ts.token_text,
        "logprob": ts.logprob,
        "entropy": ts.entropy,
        "char_span": list(ts.char_span),
    }


def token_score_from_dict(raw: dict[str, Any]) -> TokenScore:
    return TokenScore(
        token_text=raw["token_text"],
        logprob=raw["logprob"],
        entropy=raw.get("entropy"),
        char_span=tuple(raw["char_span"]),
    )


def entropy_support_to_dict(es: EntropySupport) -> dict[str, Any]:
    return {"kind": es.kind, "k": es.k}


def entropy_support_from_dict(raw: dict[str, Any]) -> EntropySupport:
    return EntropySupport(kind=raw["kind"], k=raw.get("k"))


def generated_answer_to_dict(ga: GeneratedAnswer) -> dict[str, Any]:
    return {
        "text": ga.text,
        "finish_reason": ga.finish_reason,
        "generator_token_scores": (
            None
            if ga.generator_token_scores is None
            else [token_score_to_dict(ts) for ts in ga.generator_token_scores]
        ),
    }


def generated_answer_from_dict(raw: dict[str, Any]) -> GeneratedAnswer:
    scores = raw.get("generator_token_scores")
    return GeneratedAnswer(
        text=raw["text"],
        finish_reason=raw["finish_reason"],
        generator_token_scores=(
            None if scores is None else tuple(token_score_from_dict(t) for t in scores)
        ),
    )


def scored_sequence_to_dict(ss: ScoredSequence) -> dict[str, Any]:
    return {
        "prompt_text": ss.prompt_text,
        "answer_text": ss.answer_text,
        "scorer_id": ss.scorer_id,
        "token_scores": [token_score_to_dict(ts) for ts in ss.token_scores],
        "entropy_support": entropy_support_to_dict(ss.entropy_support),
        "answer_token_count": ss.answer_token_count,
    }


def scored_sequence_from_dict(raw: dict[str, Any]) -> ScoredSequence:
    return ScoredSequence(
        prompt_text=raw["prompt_text"],
        answer_text=raw["answer_text"],
        scorer_id=raw["scorer_id"],
        token_scores=tuple(token_score_from_dict(t) for t in raw["token_scores"]),
        entropy_support=entropy_support_from_dict(raw["entropy_support"]),
        answer_token_count=raw["answer_token_count"],
    )
