"""Exact inner-product top-k search over document vectors.

Brute-force scan, no approximation: at the corpus sizes this package targets,
an exact scan is fast and doubles as a correctness oracle for everything built
on top. Similarities are accumulated in float64 so ranking ties are stable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import KIND_PASSAGE, KIND_TABLE_CHUNK
from .embed import EmbeddingProvider

CIDX_MAGIC = b"CIDX"
CIDX_VERSION = 1

_KIND_CODES = {KIND_TABLE_CHUNK: 0, KIND_PASSAGE: 1}
_KIND_NAMES = {code: kind for kind, code in _KIND_CODES.items()}

SCOPE_TABLES_ONLY = "tables-only"
SCOPE_JOINT = "joint"


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    sim: float
    rank: int


class DenseIndex:
    """Id list + row-major float32 matrix; immutable after construction."""

    def __init__(self, dim: int, ids: list[str], kinds: list[str], matrix: np.ndarray):
        if matrix.shape != (len(ids), dim):
            raise ValueError(f"matrix shape {matrix.shape} != ({len(ids)}, {dim})")
        if len(kinds) != len(ids):
            raise ValueError("kinds and ids length mismatch")
        self.dim = dim
        self.ids = list(ids)
        self.kinds = list(kinds)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self._matrix64 = self.matrix.astype(np.float64)
        self._ids_arr = np.asarray(self.ids) if self.ids else np.zeros(0, dtype="<U1")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def build(cls, provider: EmbeddingProvider, docs: Iterable[tuple[str, str, str]]) -> "DenseIndex":
        """Index (doc_id, kind, text) records in input order."""
        ids: list[str] = []
        kinds: list[str] = []
        rows: list[np.ndarray] = []
        for doc_id, kind, text in docs:
            if kind not in _KIND_CODES:
                raise ValueError(f"unknown doc kind {kind!r}")
            vec = np.asarray(provider.embed_doc(text, key=doc_id), dtype=np.float32)
            if vec.shape != (provider.dim,):
                raise ValueError(f"doc {doc_id!r}: vector shape {vec.shape} != ({provider.dim},)")
            ids.append(doc_id)
            kinds.append(kind)
            rows.append(vec)
        matrix = np.stack(rows) if rows else np.zeros((0, provider.dim), dtype=np.float32)
        return cls(provider.dim, ids, kinds, matrix)

    def _check_query(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query shape {q.shape} != ({self.dim},)")
        return q

    def search_topk(self, query: np.ndarray, k: int, mask: np.ndarray | None = None) -> list[SearchHit]:
        """Exact top-k by inner product; ties broken by ascending doc id.

        ``mask`` optionally restricts the scan to a boolean subset of rows.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._check_query(query)
        if len(self.ids) == 0:
            return []
        sims = self._matrix64 @ q
        if mask is not None:
            candidates = np.flatnonzero(mask)
            if candidates.size == 0:
                return []
            sims = sims[candidates]
            ids = self._ids_arr[candidates]
        else:
            ids = self._ids_arr
        order = np.lexsort((ids, -sims))[:k]
        return [
            SearchHit(doc_id=str(ids[i]), sim=float(sims[i]), rank=r + 1)
            for r, i in enumerate(order)
        ]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(CIDX_MAGIC)
            fh.write(struct.pack("<IIQ", CIDX_VERSION, self.dim, len(self.ids)))
            fh.write(bytes(_KIND_CODES[k] for k in self.kinds))
            for doc_id in self.ids:
                encoded = doc_id.encode("utf-8")
                if len(encoded) > 0xFFFF:
                    raise ValueError(f"id too long: {doc_id!r}")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
            fh.write(self.matrix.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "DenseIndex":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CIDX_MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}")
            version, dim, count = struct.unpack("<IIQ", fh.read(16))
            if version != CIDX_VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            kind_codes = fh.read(count)
            kinds = [_KIND_NAMES[c] for c in kind_codes]
            ids = []
            for _ in range(count):
                (id_len,) = struct.unpack("<H", fh.read(2))
                ids.append(fh.read(id_len).decode("utf-8"))
            data = fh.read(4 * dim * count)
            matrix = np.frombuffer(data, dtype="<f4").reshape(count, dim).astype(np.float32)
        return cls(dim, ids, kinds, matrix)


def retrieve_first_hop(
    index: DenseIndex,
    provider: EmbeddingProvider,
    question: str,
    k1: int = 100,
    scope: str = SCOPE_TABLES_ONLY,
    question_id: str | None = None,
) -> list[SearchHit]:
    """First-hop retrieval: top-k1 documents for a question.

    "tables-only" restricts the scan to table chunks before ranking; "joint"
    searches tables and passages together.
    """
    query = provider.embed_question(question, key=question_id)
    if scope == SCOPE_TABLES_ONLY:
        mask = np.asarray([k == KIND_TABLE_CHUNK for k in index.kinds], dtype=bool)
        return index.search_topk(query, k1, mask=mask)
    if scope == SCOPE_JOINT:
        return index.search_topk(query, k1)
    raise ValueError(f"unknown scope {scope!r}")
