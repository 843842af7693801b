"""Question-generation relevance scoring: how plausibly a document generates a question.

A scorer returns the mean log-likelihood of the question tokens conditioned on
a document; higher means more relevant. The reference scorer is a
Laplace-smoothed unigram model so every value is exactly reproducible by hand;
the service adapter plugs in a real generative scorer behind the same
contract. A shared cache keeps cost linear when one document participates in
many chains.
"""

from __future__ import annotations

import math
import threading
from collections import Counter
from typing import Sequence

from .corpus import tokenize
from .service import JsonLineClient

PROMPT_INSTRUCTION = "Please write a question based on this passage."


def format_prompt(doc_text: str) -> str:
    """Append the generation instruction to a document, exactly once."""
    if doc_text.endswith(PROMPT_INSTRUCTION):
        raise ValueError("document text is already prompt-formatted")
    return f"{doc_text}\n{PROMPT_INSTRUCTION}"


class QgScorer:
    """Contract: deterministic score(question, doc_text) -> mean log-likelihood."""

    def score(self, question: str, doc_text: str) -> float:
        raise NotImplementedError


class ReferenceQgScorer(QgScorer):
    """Laplace-smoothed unigram likelihood of the question under the document.

    P(w) = (count(w in doc) + 1) / (len(doc) + V) with V the size of the
    union of document and question vocabularies; the score is the mean of
    ln P(w) over question tokens. Always <= 0.
    """

    def score(self, question: str, doc_text: str) -> float:
        q_tokens = tokenize(question)
        if not q_tokens:
            raise ValueError("question must have at least one token")
        d_tokens = tokenize(doc_text)
        counts = Counter(d_tokens)
        vocab = len(set(d_tokens) | set(q_tokens))
        denom = len(d_tokens) + vocab
        return sum(math.log((counts[w] + 1) / denom) for w in q_tokens) / len(q_tokens)


class ServiceQgScorer(QgScorer):
    """Adapter for an external scorer speaking the line protocol.

    The document is prompt-formatted before being sent, mirroring how a
    generative model would be conditioned.
    """

    def __init__(self, command: list[str]):
        self._client = JsonLineClient(command)

    def score(self, question: str, doc_text: str) -> float:
        response = self._client.request(
            {"op": "qg_score", "question": question, "doc": format_prompt(doc_text)}
        )
        return float(response["score"])

    def close(self) -> None:
        self._client.close()


class ScoreCache:
    """(question_id, doc_id) -> score map, safe for concurrent insert-or-get.

    Scores are deterministic, so concurrent writers racing on a key write the
    same value; the lock only protects the dict itself.
    """

    def __init__(self) -> None:
        self._values: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._values)

    def get(self, question_id: str, doc_id: str) -> float | None:
        with self._lock:
            return self._values.get((question_id, doc_id))

    def put(self, question_id: str, doc_id: str, score: float) -> None:
        with self._lock:
            self._values[(question_id, doc_id)] = score


def batch_score(
    scorer: QgScorer,
    question_id: str,
    question: str,
    docs: Sequence[tuple[str, str]],
    cache: ScoreCache | None = None,
) -> list[float]:
    """Score (doc_id, text) pairs against one question, one scorer call per distinct pair.

    Repeats within the batch and across calls (via ``cache``) are served from
    the cached value.
    """
    local: dict[str, float] = {}
    out: list[float] = []
    for doc_id, text in docs:
        if doc_id in local:
            out.append(local[doc_id])
            continue
        value = cache.get(question_id, doc_id) if cache is not None else None
        if value is None:
            value = scorer.score(question, text)
            if cache is not None:
                cache.put(question_id, doc_id, value)
        local[doc_id] = value
        out.append(value)
    return out
