"""Score, rank, deduplicate, and serialize query-dependent evidence chains.

A candidate chain pairs a first-hop document with an optional linked passage.
Chains are scored by combining the retriever's log-softmax score with
question-generation scores for both hops::

    total = s_r + alpha * s_qg(hop1) + beta * s_qg(hop2)

Singletons (first-hop documents without a link) use ``s_r + 2*alpha * s_qg``
so their totals stay on the same scale as chained candidates. All three terms
are log-domain, higher is better; the ``sr_sign`` switch flips s_r to the
negated convention for auditing only.

Assembly walks the ranked chain list emitting each hop-1 document and each
hop-2 passage at most once; hop-2 passages are rendered with the table title,
header, and the mention's row prepended so each entry is self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import KIND_TABLE_CHUNK, CorpusStore, passage_text
from .dense_index import SCOPE_JOINT, SCOPE_TABLES_ONLY, SearchHit
from .linker import EvidenceGraph, LinkEdge
from .qg_scorer import QgScorer, ScoreCache, batch_score

ABLATION_FULL = "full"
ABLATION_NO_QGS_HOP1 = "no-qgs-hop1"
ABLATION_NO_QGS_ALL = "no-qgs-all"
ABLATION_NO_CHAINER = "no-chainer"
ABLATIONS = (ABLATION_FULL, ABLATION_NO_QGS_HOP1, ABLATION_NO_QGS_ALL, ABLATION_NO_CHAINER)

SR_SIGN_LOGSOFTMAX = "logsoftmax"
SR_SIGN_PAPER_LITERAL = "paper-literal"

PROFILES = {
    "ottqa": {"alpha": 16.0, "beta": 9.0, "first_hop_scope": SCOPE_TABLES_ONLY},
    "nq": {"alpha": 10.0, "beta": 12.0, "first_hop_scope": SCOPE_JOINT},
}

DEFAULT_TOP_K = 50
DEFAULT_K1 = 100
DEFAULT_MAX_LEN = 500


@dataclass
class ChainerParams:
    alpha: float = 16.0
    beta: float = 9.0
    top_k: int = DEFAULT_TOP_K
    k1: int = DEFAULT_K1
    ablation: str = ABLATION_FULL
    profile: str = "ottqa"
    sr_sign: str = SR_SIGN_LOGSOFTMAX
    first_hop_scope: str = SCOPE_TABLES_ONLY
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.k1 < 1:
            raise ValueError("k1 must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.sr_sign not in (SR_SIGN_LOGSOFTMAX, SR_SIGN_PAPER_LITERAL):
            raise ValueError(f"unknown sr sign {self.sr_sign!r}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")

    @classmethod
    def for_profile(cls, profile: str, **overrides) -> "ChainerParams":
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        kwargs = {"profile": profile, **PROFILES[profile]}
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class CandidateChain:
    hop1_id: str
    hop1_kind: str
    hop2_id: str | None
    edge: LinkEdge | None
    s_r: float
    s_t0_hop1: float | None
    s_t0_hop2: float | None
    coef_hop1: float | None
    coef_hop2: float | None
    total: float

    @property
    def breakdown(self) -> dict:
        return {
            "s_r": self.s_r,
            "s_t0_hop1": self.s_t0_hop1,
            "s_t0_hop2": self.s_t0_hop2,
            "coef_hop1": self.coef_hop1,
            "coef_hop2": self.coef_hop2,
        }


@dataclass(frozen=True)
class AssembledEntry:
    """One deduplicated reader document plus the chain that introduced it."""

    text: str
    hop1_id: str
    hop2_id: str | None
    mention_row: int | None
    chain: CandidateChain


@dataclass
class ReaderChain:
    text: str
    token_count: int
    hop1_id: str
    hop2_id: str | None
    mention_row: int | None
    total: float
    breakdown: dict


def s_r(sims: Sequence[float], idx: int, sign: str = SR_SIGN_LOGSOFTMAX) -> float:
    """Log-softmax retriever score of one hit within the first-hop evidence set."""
    values = np.asarray(sims, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty similarity list")
    if not (0 <= idx < values.size):
        raise IndexError(f"index {idx} out of range for {values.size} sims")
    m = float(values.max())
    log_z = m + float(np.log(np.exp(values - m).sum()))
    value = float(values[idx]) - log_z
    if sign == SR_SIGN_PAPER_LITERAL:
        return -value
    if sign == SR_SIGN_LOGSOFTMAX:
        return value
    raise ValueError(f"unknown sr sign {sign!r}")


def chain_score(s_r_value: float, s_t: float, s_p: float, params: ChainerParams) -> float:
    """Combined score of a (hop-1 table, hop-2 passage) chain, ablation-aware."""
    total = s_r_value
    if params.ablation == ABLATION_FULL:
        total += params.alpha * s_t
    if params.ablation in (ABLATION_FULL, ABLATION_NO_QGS_HOP1):
        total += params.beta * s_p
    return total


def singleton_score(s_r_value: float, s_doc: float, params: ChainerParams, kind: str) -> float:
    """Score of an unlinked first-hop document; the 2*alpha rescale keeps
    singletons comparable with chains for both tables and passages."""
    if params.ablation == ABLATION_FULL:
        return s_r_value + 2.0 * params.alpha * s_doc
    return s_r_value


def _dedup_edges(edges: Sequence[LinkEdge]) -> list[LinkEdge]:
    """One edge per linked passage: keep the strongest, then earliest, link."""
    best: dict[str, LinkEdge] = {}
    for edge in edges:
        seen = best.get(edge.passage_id)
        if (
            seen is None
            or edge.link_score > seen.link_score
            or (
                edge.link_score == seen.link_score
                and (edge.mention.start, edge.mention.end) < (seen.mention.start, seen.mention.end)
            )
        ):
            best[edge.passage_id] = edge
    return sorted(best.values(), key=lambda e: e.passage_id)


def rank_chains(
    question_id: str,
    question: str,
    first_hop_hits: Sequence[SearchHit],
    graph: EvidenceGraph,
    store: CorpusStore,
    scorer: QgScorer,
    params: ChainerParams,
    cache: ScoreCache | None = None,
) -> list[CandidateChain]:
    """Enumerate and rank all candidate chains for one question.

    Every (hop-1 doc, linked passage) pair yields one chained candidate; every
    unlinked hop-1 doc yields one singleton. Linker scores never enter the
    total. Under the no-chainer ablation no scoring happens at all: hop-1 docs
    and their linked passages are kept in retrieval order.
    """
    sims = [hit.sim for hit in first_hop_hits]
    need_hop1_qgs = params.ablation == ABLATION_FULL
    need_hop2_qgs = params.ablation in (ABLATION_FULL, ABLATION_NO_QGS_HOP1)

    def qgs(doc_id: str, text: str) -> float:
        try:
            (value,) = batch_score(scorer, question_id, question, [(doc_id, text)], cache)
        except Exception as exc:
            raise RuntimeError(f"scorer failed on doc {doc_id!r}") from exc
        return value

    candidates: list[CandidateChain] = []
    for idx, hit in enumerate(first_hop_hits):
        kind = store.doc_kind(hit.doc_id)
        s_r_value = s_r(sims, idx, params.sr_sign)
        edges = _dedup_edges(graph.for_chunk(hit.doc_id)) if kind == KIND_TABLE_CHUNK else []

        if params.ablation == ABLATION_NO_CHAINER:
            candidates.append(
                CandidateChain(
                    hit.doc_id, kind, None, None, s_r_value, None, None, None, None, s_r_value
                )
            )
            for edge in edges:
                candidates.append(
                    CandidateChain(
                        hit.doc_id, kind, edge.passage_id, edge, s_r_value,
                        None, None, None, None, s_r_value,
                    )
                )
            continue

        if not edges:
            s_doc = qgs(hit.doc_id, store.doc_text(hit.doc_id)) if need_hop1_qgs else None
            coef = 2.0 * params.alpha if need_hop1_qgs else None
            candidates.append(
                CandidateChain(
                    hit.doc_id, kind, None, None, s_r_value,
                    s_doc, None, coef, None,
                    singleton_score(s_r_value, s_doc or 0.0, params, kind),
                )
            )
            continue

        s_t = qgs(hit.doc_id, store.doc_text(hit.doc_id)) if need_hop1_qgs else None
        coef1 = params.alpha if need_hop1_qgs else None
        coef2 = params.beta if need_hop2_qgs else None
        for edge in edges:
            s_p = (
                qgs(edge.passage_id, passage_text(store.passages[edge.passage_id]))
                if need_hop2_qgs
                else None
            )
            candidates.append(
                CandidateChain(
                    hit.doc_id, kind, edge.passage_id, edge, s_r_value,
                    s_t, s_p, coef1, coef2,
                    chain_score(s_r_value, s_t or 0.0, s_p or 0.0, params),
                )
            )

    candidates.sort(key=lambda c: (-c.total, c.hop1_id, c.hop2_id or ""))
    return candidates


def _render_row(store: CorpusStore, table_id: str, row_index: int) -> str:
    cells = store.tables[table_id].rows[row_index]
    return ", ".join(cells)


def _mention_row(store: CorpusStore, chain: CandidateChain) -> int | None:
    """Table row containing the mention that produced this chain's link."""
    if chain.edge is None:
        return None
    chunk = store.chunks[chain.hop1_id]
    cell = chunk.cell_at(chain.edge.mention.start)
    if cell is None or cell.row < 0:
        return None
    return cell.row


def _hop2_text(store: CorpusStore, chain: CandidateChain, mention_row: int | None) -> str:
    passage = store.passages[chain.hop2_id]
    chunk = store.chunks[chain.hop1_id]
    table = store.tables[chunk.table_id]
    parts = [table.title]
    if table.header:
        parts.append(", ".join(table.header))
    if mention_row is not None:
        parts.append(_render_row(store, chunk.table_id, mention_row))
    parts.append(passage_text(passage))
    return " || ".join(parts)


def assemble_topk(
    chains: Sequence[CandidateChain],
    store: CorpusStore,
    params: ChainerParams,
) -> list[AssembledEntry]:
    """Walk ranked chains emitting up to top_k deduplicated reader documents.

    A hop-1 document is emitted the first time any chain carries it; a hop-2
    passage is emitted the first time it appears, rendered behind the table
    title, header, and its mention's row. Under the no-chainer ablation the
    hop-2 passage is passed through bare instead of being spliced to the table.
    """
    entries: list[AssembledEntry] = []
    seen_hop1: set[str] = set()
    seen_hop2: set[str] = set()
    budget = params.top_k
    for chain in chains:
        if len(entries) >= budget:
            break
        if chain.hop1_id not in seen_hop1:
            seen_hop1.add(chain.hop1_id)
            entries.append(
                AssembledEntry(store.doc_text(chain.hop1_id), chain.hop1_id, None, None, chain)
            )
            if len(entries) >= budget:
                break
        if chain.hop2_id is None or chain.hop2_id in seen_hop2:
            continue
        seen_hop2.add(chain.hop2_id)
        if params.ablation == ABLATION_NO_CHAINER:
            text = passage_text(store.passages[chain.hop2_id])
            row = None
        else:
            row = _mention_row(store, chain)
            text = _hop2_text(store, chain, row)
        entries.append(AssembledEntry(text, chain.hop1_id, chain.hop2_id, row, chain))
    return entries


def serialize_chain(
    question: str, entry: AssembledEntry, max_len: int = DEFAULT_MAX_LEN
) -> ReaderChain:
    """Render one reader input, truncated to at most max_len whitespace tokens."""
    text = f"question: {question} || {entry.text}"
    tokens = text.split()
    if len(tokens) > max_len:
        tokens = tokens[:max_len]
        text = " ".join(tokens)
    return ReaderChain(
        text=text,
        token_count=len(tokens),
        hop1_id=entry.hop1_id,
        hop2_id=entry.hop2_id,
        mention_row=entry.mention_row,
        total=entry.chain.total,
        breakdown=entry.chain.breakdown,
    )
