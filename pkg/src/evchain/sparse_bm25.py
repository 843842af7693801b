"""Okapi BM25 scoring for hard-negative mining and lexical baselines.

Lucene-flavored idf with +1 inside the log, so scores never go negative:

    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
    score  = sum over query terms of idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Passage, tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

STRATEGY_TITLE = "title"
STRATEGY_TITLE_FIRST_SENTENCE = "title+first-sentence"
MINING_STRATEGIES = (STRATEGY_TITLE, STRATEGY_TITLE_FIRST_SENTENCE)

_SENTENCE_ENDERS = ".!?"


def first_sentence(text: str) -> str:
    """Text up to the first '.', '!' or '?' that is followed by space or end."""
    for i, ch in enumerate(text):
        if ch in _SENTENCE_ENDERS and (i + 1 == len(text) or text[i + 1].isspace()):
            return text[: i + 1]
    return text


@dataclass
class Bm25Index:
    doc_ids: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avgdl: float
    n_docs: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    _tf: list[dict[str, int]] = field(default_factory=list, repr=False)

    @classmethod
    def build(
        cls,
        docs: Sequence[tuple[str, str]],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ) -> "Bm25Index":
        """Index (doc_id, text) pairs; ordinals follow input order."""
        doc_ids = [doc_id for doc_id, _ in docs]
        postings: dict[str, list[tuple[int, int]]] = {}
        doc_lengths: list[int] = []
        tf_maps: list[dict[str, int]] = []
        for ordinal, (_, text) in enumerate(docs):
            tokens = tokenize(text)
            doc_lengths.append(len(tokens))
            tf: dict[str, int] = {}
            for tok in tokens:
                tf[tok] = tf.get(tok, 0) + 1
            tf_maps.append(tf)
            for term in sorted(tf):
                postings.setdefault(term, []).append((ordinal, tf[term]))
        n = len(doc_ids)
        avgdl = sum(doc_lengths) / n if n else 0.0
        return cls(doc_ids, postings, doc_lengths, avgdl, n, k1, b, tf_maps)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def score(self, query_tokens: Sequence[str], ordinal: int) -> float:
        """BM25 score of one document for a tokenized query; unseen terms add 0."""
        if not (0 <= ordinal < self.n_docs):
            raise IndexError(f"doc ordinal {ordinal} out of range")
        dl = self.doc_lengths[ordinal]
        tf_map = self._tf[ordinal]
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl) if self.avgdl else self.k1
        total = 0.0
        for term in query_tokens:
            tf = tf_map.get(term, 0)
            if tf == 0:
                continue
            total += self.idf(term) * tf * (self.k1 + 1.0) / (tf + norm)
        return total

    def rank(self, query_tokens: Sequence[str], n: int) -> list[tuple[str, float]]:
        """Top-n (doc_id, score) pairs, ties broken by ascending doc id."""
        scored = [(self.score(query_tokens, i), self.doc_ids[i]) for i in range(self.n_docs)]
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        return [(doc_id, score) for score, doc_id in scored[:n]]


def build_negative_index(
    passages: Iterable[Passage],
    strategy: str,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> Bm25Index:
    """BM25 index over passage titles, or titles plus first sentences."""
    if strategy == STRATEGY_TITLE:
        docs = [(p.id, p.title) for p in passages]
    elif strategy == STRATEGY_TITLE_FIRST_SENTENCE:
        docs = [(p.id, f"{p.title} {first_sentence(p.text)}") for p in passages]
    else:
        raise ValueError(f"unknown mining strategy {strategy!r}")
    return Bm25Index.build(docs, k1=k1, b=b)


def mine_hard_negatives(
    index: Bm25Index,
    strategy: str,
    mention: str,
    table_title: str,
    n: int,
    gold_passage_id: str,
) -> list[str]:
    """Top-n BM25 hits for a mention query, with the gold passage excluded.

    The "title" strategy queries with the mention alone; "title+first-sentence"
    appends the table title to the query.
    """
    if strategy == STRATEGY_TITLE:
        query = tokenize(mention)
    elif strategy == STRATEGY_TITLE_FIRST_SENTENCE:
        query = tokenize(mention) + tokenize(table_title)
    else:
        raise ValueError(f"unknown mining strategy {strategy!r}")
    ranked = index.rank(query, n + 1)
    return [doc_id for doc_id, _ in ranked if doc_id != gold_passage_id][:n]
