"""Retrieval and answer metrics: chunk recall, answer recall, EM/F1.

Answer containment for answer recall uses contiguous token matching after
normalization, never raw substring search, so "cox" does not match
"coxswain". Aggregates are percentages: mean of the per-question column
times 100.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT_TABLE)
    return " ".join(tok for tok in s.split() if tok not in _ARTICLES)


def em_f1(prediction: str, gold_answers: Sequence[str]) -> tuple[int, float]:
    """Exact match against any gold answer and the best token-overlap F1."""
    if not gold_answers:
        raise ValueError("at least one gold answer is required")
    pred = normalize_answer(prediction)
    pred_tokens = pred.split()
    em = 0
    best_f1 = 0.0
    for gold in gold_answers:
        g = normalize_answer(gold)
        if pred == g:
            em = 1
        g_tokens = g.split()
        if not pred_tokens and not g_tokens:
            best_f1 = max(best_f1, 1.0)
            continue
        if not pred_tokens or not g_tokens:
            continue
        overlap = sum((Counter(pred_tokens) & Counter(g_tokens)).values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(g_tokens)
        best_f1 = max(best_f1, 2 * precision * recall / (precision + recall))
    return em, best_f1


def recall_at_k(ranked_chunks: Sequence[str], gold_chunks: Iterable[str], k: int) -> int:
    """1 iff any of the first k chunk ids is gold."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold_chunks)
    return int(any(cid in gold for cid in ranked_chunks[:k]))


def _contains_tokens(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i] == first and haystack[i : i + len(needle)] == needle:
            return True
    return False


def answer_recall_at_k(reader_texts: Sequence[str], answers: Sequence[str], k: int) -> int:
    """1 iff a normalized answer appears as a contiguous token run in a top-k chain."""
    if k < 1:
        raise ValueError("k must be >= 1")
    needles = [normalize_answer(a).split() for a in answers]
    needles = [n for n in needles if n]
    if not needles:
        return 0
    for text in reader_texts[:k]:
        haystack = normalize_answer(text).split()
        if any(_contains_tokens(haystack, n) for n in needles):
            return 1
    return 0


@dataclass
class MetricReport:
    """Per-question metric columns plus their aggregate percentages."""

    per_question: dict[str, dict[str, float]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def add(self, qid: str, values: dict[str, float]) -> None:
        self.per_question[qid] = dict(values)

    @property
    def aggregates(self) -> dict[str, float]:
        metrics: dict[str, list[float]] = {}
        for values in self.per_question.values():
            for name, value in values.items():
                metrics.setdefault(name, []).append(value)
        return {
            name: 100.0 * sum(column) / len(column) for name, column in sorted(metrics.items())
        }

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "aggregates": self.aggregates,
            "per_question": self.per_question,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)

    def to_text(self) -> str:
        agg = self.aggregates
        if not agg:
            return "(no questions evaluated)"
        width = max(len(name) for name in agg)
        lines = [f"{name.ljust(width)}  {value:6.1f}" for name, value in agg.items()]
        if self.config:
            echo = ", ".join(f"{k}={v}" for k, v in sorted(self.config.items()))
            lines.append(f"[{echo}]")
        return "\n".join(lines)


def ablation_report(
    run_mode: Callable[[str], MetricReport], modes: Sequence[str]
) -> dict[str, MetricReport]:
    """One metric report per chainer mode, computed over the same inputs."""
    return {mode: run_mode(mode) for mode in modes}


def format_ablation_table(reports: dict[str, MetricReport]) -> str:
    """Aligned mode-by-metric table over a set of reports."""
    names = sorted({name for report in reports.values() for name in report.aggregates})
    mode_width = max(len("mode"), max((len(m) for m in reports), default=4))
    header = "mode".ljust(mode_width) + "".join(name.rjust(max(len(name), 7) + 2) for name in names)
    lines = [header]
    for mode, report in reports.items():
        agg = report.aggregates
        row = mode.ljust(mode_width)
        for name in names:
            cell = f"{agg[name]:.1f}" if name in agg else "-"
            row += cell.rjust(max(len(name), 7) + 2)
        lines.append(row)
    return "\n".join(lines)


def overlap_reader(reader_texts: Sequence[str], question: str) -> str:
    """Trivial baseline answer extractor for end-to-end smoke tests only.

    Picks the token n-gram (n <= 3) that appears in the most chains, ignoring
    question tokens; ties prefer longer n-grams, then the earliest occurrence
    in the best-ranked chain.
    """
    q_tokens = set(normalize_answer(question).split())
    counts: Counter[tuple[str, ...]] = Counter()
    first_seen: dict[tuple[str, ...], tuple[int, int]] = {}
    for rank, text in enumerate(reader_texts):
        tokens = normalize_answer(text).split()
        seen_here: set[tuple[str, ...]] = set()
        for n in (1, 2, 3):
            for i in range(len(tokens) - n + 1):
                gram = tuple(tokens[i : i + n])
                if any(tok in q_tokens for tok in gram):
                    continue
                if gram not in seen_here:
                    counts[gram] += 1
                    seen_here.add(gram)
                first_seen.setdefault(gram, (rank, i))
    if not counts:
        return ""
    best = min(
        counts,
        key=lambda gram: (-counts[gram], -len(gram), first_seen[gram]),
    )
    return " ".join(best)
