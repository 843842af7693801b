"""Table entity linking: mention proposal, span extraction, and passage linking.

The mention tagger is a linear projection over per-token states followed by a
two-class softmax (row 0 = not-a-mention, row 1 = mention). Proposed spans are
maximal runs of above-threshold tokens, clipped to single-cell boundaries.
Each span is embedded from its boundary token states and linked to passages by
exact inner-product search; the resulting chunk -> passage edges form the
evidence graph consumed by the chainer.

Training utilities implement the token-level binary loss and the contrastive
linking objective with analytic gradients (both verified against finite
differences in the test suite) and plain seeded SGD.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusStore, GoldLink, TableChunk
from .dense_index import DenseIndex
from .embed import EmbeddingProvider, entity_embedding
from .hashing import stream_rng

CTGR_MAGIC = b"CTGR"

DEFAULT_THRESHOLD = 0.5
DEFAULT_TOP_M = 1


@dataclass
class LinearTagger:
    """2 x d projection producing (not-mention, mention) logits per token."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != 2:
            raise ValueError(f"tagger weights must be (2, d), got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("tagger weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, dim: int) -> "LinearTagger":
        return cls(np.zeros((2, dim), dtype=np.float64))

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(CTGR_MAGIC)
            fh.write(struct.pack("<I", self.dim))
            fh.write(self.weights.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "LinearTagger":
        with open(path, "rb") as fh:
            if fh.read(4) != CTGR_MAGIC:
                raise ValueError(f"{path}: not a tagger file")
            (dim,) = struct.unpack("<I", fh.read(4))
            weights = np.frombuffer(fh.read(16 * dim), dtype="<f8").reshape(2, dim)
        return cls(weights.copy())


@dataclass(frozen=True)
class MentionSpan:
    chunk_id: str
    start: int
    end: int  # inclusive
    surface: str


@dataclass(frozen=True)
class LinkEdge:
    mention: MentionSpan
    passage_id: str
    link_score: float


@dataclass
class EvidenceGraph:
    """chunk_id -> outgoing link edges, built query-agnostically over the corpus."""

    edges: dict[str, list[LinkEdge]] = field(default_factory=dict)

    def add(self, chunk_id: str, chunk_edges: list[LinkEdge]) -> None:
        ordered = sorted(
            chunk_edges,
            key=lambda e: (e.mention.start, e.mention.end, -e.link_score, e.passage_id),
        )
        self.edges[chunk_id] = ordered

    def for_chunk(self, chunk_id: str) -> list[LinkEdge]:
        return self.edges.get(chunk_id, [])

    def all_pairs(self) -> set[tuple[str, str]]:
        return {
            (chunk_id, edge.passage_id)
            for chunk_id, chunk_edges in self.edges.items()
            for edge in chunk_edges
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for chunk_id in self.edges:
                for e in self.edges[chunk_id]:
                    record = {
                        "chunk_id": chunk_id,
                        "start": e.mention.start,
                        "end": e.mention.end,
                        "surface": e.mention.surface,
                        "passage_id": e.passage_id,
                        "score": e.link_score,
                    }
                    fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvidenceGraph":
        by_chunk: dict[str, list[LinkEdge]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                span = MentionSpan(rec["chunk_id"], rec["start"], rec["end"], rec["surface"])
                by_chunk.setdefault(rec["chunk_id"], []).append(
                    LinkEdge(span, rec["passage_id"], rec["score"])
                )
        graph = cls()
        for chunk_id, chunk_edges in by_chunk.items():
            graph.add(chunk_id, chunk_edges)
        return graph


def _check_states(states: np.ndarray, dim: int) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != dim:
        raise ValueError(f"token states shape {states.shape} incompatible with dim {dim}")
    return states


def _log_softmax2(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def tag_probs(states: np.ndarray, tagger: LinearTagger) -> np.ndarray:
    """Per-token probability of the mention class."""
    states = _check_states(states, tagger.dim)
    logits = states @ tagger.weights.T
    return np.exp(_log_softmax2(logits)[:, 1])


def bce_loss_and_grad(
    states: np.ndarray, labels: Sequence[int], tagger: LinearTagger
) -> tuple[float, np.ndarray]:
    """Token-level binary loss and its gradient with respect to the tagger weights.

    loss = -(1/N) * sum_n (y_n * ln P_1 + (1 - y_n) * ln P_0)
    """
    states = _check_states(states, tagger.dim)
    y = np.asarray(labels, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("cannot compute loss over zero tokens")
    if states.shape[0] != n:
        raise ValueError(f"{states.shape[0]} states vs {n} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    logits = states @ tagger.weights.T
    log_probs = _log_softmax2(logits)
    loss = -float(log_probs[np.arange(n), y].mean())
    probs = np.exp(log_probs)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    grad = delta.T @ states / n
    return loss, grad


def extract_spans(
    probs: np.ndarray,
    chunk: TableChunk,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[MentionSpan]:
    """Maximal runs of above-threshold tokens, clipped to single-cell boundaries.

    Tokens outside any cell (title, header separators) never join a span.
    """
    probs = np.asarray(probs, dtype=np.float64)
    tokens = chunk.tokens()
    if len(probs) != len(tokens):
        raise ValueError(f"{len(probs)} probs vs {len(tokens)} chunk tokens")
    hot = probs > threshold
    spans: list[MentionSpan] = []
    for cell in chunk.cell_map:
        run_start: int | None = None
        for idx in range(cell.start, cell.end + 1):
            inside = idx < cell.end and hot[idx]
            if inside and run_start is None:
                run_start = idx
            elif not inside and run_start is not None:
                surface = " ".join(tokens[run_start:idx])
                spans.append(MentionSpan(chunk.chunk_id, run_start, idx - 1, surface))
                run_start = None
    spans.sort(key=lambda s: (s.start, s.end))
    return spans


def contrastive_loss_and_grad(
    entity_vec: np.ndarray,
    positive_vec: np.ndarray,
    negative_vecs: Sequence[np.ndarray],
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Negative log-softmax of the positive's inner product among all candidates.

    Returns (loss, d/d entity, d/d positive, d/d negatives). Similarity is the
    plain inner product.
    """
    e = np.asarray(entity_vec, dtype=np.float64)
    pos = np.asarray(positive_vec, dtype=np.float64)
    negs = np.asarray(negative_vecs, dtype=np.float64)
    if negs.ndim != 2 or negs.shape[0] == 0:
        raise ValueError("at least one negative vector is required")
    if pos.shape != e.shape or negs.shape[1] != e.shape[0]:
        raise ValueError("entity, positive, and negative dims must agree")
    candidates = np.vstack([pos[None, :], negs])
    sims = candidates @ e
    m = sims.max()
    exp = np.exp(sims - m)
    z = exp.sum()
    loss = -float(sims[0] - m - np.log(z))
    q = exp / z
    grad_e = q @ candidates - pos
    grad_candidates = np.outer(q, e)
    grad_candidates[0] -= e
    return loss, grad_e, grad_candidates[0], grad_candidates[1:]


def link_mentions(
    chunk: TableChunk,
    spans: Sequence[MentionSpan],
    passage_index: DenseIndex,
    provider: EmbeddingProvider,
    top_m: int = DEFAULT_TOP_M,
    link_map: np.ndarray | None = None,
) -> list[LinkEdge]:
    """Link each proposed span to its top-m passages by inner-product search."""
    if not spans:
        return []
    states = provider.token_states(chunk.text)
    edges: list[LinkEdge] = []
    for span in spans:
        query = entity_embedding(states, span.start, span.end)
        if link_map is not None:
            query = np.asarray(link_map, dtype=np.float64) @ query
        for hit in passage_index.search_topk(query, top_m):
            edges.append(LinkEdge(span, hit.doc_id, hit.sim))
    return edges


def build_evidence_graph(
    store: CorpusStore,
    passage_index: DenseIndex,
    provider: EmbeddingProvider,
    tagger: LinearTagger,
    threshold: float = DEFAULT_THRESHOLD,
    top_m: int = DEFAULT_TOP_M,
    link_map: np.ndarray | None = None,
) -> EvidenceGraph:
    """Propose and link mentions for every table chunk in the corpus."""
    graph = EvidenceGraph()
    for chunk in store.chunks.values():
        states = provider.token_states(chunk.text)
        if len(states) == 0:
            continue
        probs = tag_probs(states, tagger)
        spans = extract_spans(probs, chunk, threshold)
        edges = link_mentions(chunk, spans, passage_index, provider, top_m, link_map)
        if edges:
            graph.add(chunk.chunk_id, edges)
    return graph


def eval_links(
    graph: EvidenceGraph, gold_links: Iterable[GoldLink]
) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over (chunk, passage) pairs."""
    predicted = graph.all_pairs()
    gold = {(g.chunk_id, g.passage_id) for g in gold_links}
    correct = len(predicted & gold)
    precision = correct / len(predicted) if predicted else 0.0
    recall = correct / len(gold) if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def train_tagger(
    examples: Sequence[tuple[np.ndarray, Sequence[int]]],
    dim: int,
    epochs: int = 200,
    lr: float = 5.0,
    seed: int = 0,
) -> LinearTagger:
    """Fit the mention tagger with SGD over (token states, labels) examples.

    One gradient step per example, example order shuffled each epoch from a
    seeded stream.
    """
    if not examples:
        raise ValueError("no training examples")
    tagger = LinearTagger.zeros(dim)
    rng = stream_rng(seed, "train-tagger")
    order = np.arange(len(examples))
    for _ in range(epochs):
        rng.shuffle(order)
        for idx in order:
            states, labels = examples[idx]
            _, grad = bce_loss_and_grad(states, labels, tagger)
            tagger.weights -= lr * grad
    return tagger


def train_link_map(
    triples: Sequence[tuple[np.ndarray, np.ndarray, Sequence[np.ndarray]]],
    dim: int,
    epochs: int = 20,
    lr: float = 0.1,
    batch_size: int = 8,
    seed: int = 0,
) -> np.ndarray:
    """Fit a d x d map applied to entity embeddings before linking.

    Each triple is (entity, positive passage, hard-negative pool); a step uses
    one sampled hard negative plus the other in-batch positives as negatives,
    with the contrastive objective above.
    """
    if not triples:
        raise ValueError("no training triples")
    link_map = np.eye(dim, dtype=np.float64)
    rng = stream_rng(seed, "train-link-map")
    order = np.arange(len(triples))
    for _ in range(epochs):
        rng.shuffle(order)
        for batch_start in range(0, len(order), batch_size):
            batch = order[batch_start : batch_start + batch_size]
            grad = np.zeros_like(link_map)
            for idx in batch:
                entity, positive, pool = triples[idx]
                negatives = []
                if len(pool) > 0:
                    negatives.append(np.asarray(pool[int(rng.integers(len(pool)))]))
                negatives.extend(
                    np.asarray(triples[other][1]) for other in batch if other != idx
                )
                if not negatives:
                    continue
                mapped = link_map @ np.asarray(entity, dtype=np.float64)
                _, grad_e, _, _ = contrastive_loss_and_grad(mapped, positive, negatives)
                grad += np.outer(grad_e, entity)
            if len(batch):
                link_map -= lr * grad / len(batch)
    return link_map
