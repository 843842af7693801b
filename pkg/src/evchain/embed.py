"""Embedding providers for questions, documents, and per-token states.

The reference provider is fully deterministic: each token's vector is derived
from a 64-bit hash of its lowercased bytes, so every downstream stage can be
tested against exact oracles with no model weights involved. Contextual
neural embeddings enter through the file-backed provider (precomputed
vectors) or the external service adapter; both honor the same contract.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .corpus import tokenize
from .hashing import fnv1a64, splitmix64, unit_interval
from .service import JsonLineClient

DEFAULT_DIM = 64

CVEC_MAGIC = b"CVEC"
CVEC_VERSION = 1


def reference_token_vector(token: str, dim: int) -> np.ndarray:
    """Unit-norm pseudo-random vector for a token, stable across runs and platforms.

    Component k is 2u-1 where u is the [0,1) value from
    splitmix64(fnv1a64(lowercased token bytes) XOR k).
    """
    if not token:
        raise ValueError("token must be non-empty")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    base = fnv1a64(token.lower().encode("utf-8"))
    values = np.empty(dim, dtype=np.float64)
    for k in range(dim):
        values[k] = 2.0 * unit_interval(splitmix64(base ^ k)) - 1.0
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise ValueError(f"degenerate zero vector for token {token!r}")
    return (values / norm).astype(np.float32)


def entity_embedding(states: np.ndarray, i: int, j: int) -> np.ndarray:
    """Span embedding: elementwise mean of the boundary token states.

    Not renormalized; ``i``/``j`` are inclusive token indices.
    """
    n = len(states)
    if not (0 <= i <= j < n):
        raise ValueError(f"span ({i}, {j}) out of range for {n} token states")
    return (np.asarray(states[i], dtype=np.float64) + np.asarray(states[j], dtype=np.float64)) / 2.0


class EmbeddingProvider:
    """Contract: deterministic question/doc/token-state embeddings at a fixed dim.

    ``key`` carries the document or question id; providers backed by
    precomputed vectors look up by key, text-based providers ignore it.
    """

    dim: int

    def embed_question(self, text: str, key: str | None = None) -> np.ndarray:
        raise NotImplementedError

    def embed_doc(self, text: str, key: str | None = None) -> np.ndarray:
        raise NotImplementedError

    def token_states(self, text: str) -> np.ndarray:
        raise NotImplementedError


class ReferenceProvider(EmbeddingProvider):
    """Bag-of-tokens provider built on the hash recipe above.

    Documents and questions embed to the L2-normalized mean of their token
    vectors; token states are the per-token vectors themselves (context-free).
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            vec = reference_token_vector(token, self.dim)
            self._token_cache[token] = vec
        return vec

    def _embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot embed empty text")
        acc = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            acc += self._token_vector(tok)
        acc /= len(tokens)
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            raise ValueError("degenerate zero embedding")
        return (acc / norm).astype(np.float32)

    def embed_question(self, text: str, key: str | None = None) -> np.ndarray:
        return self._embed(text)

    def embed_doc(self, text: str, key: str | None = None) -> np.ndarray:
        return self._embed(text)

    def token_states(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self._token_vector(t) for t in tokens])


class FileVectorProvider(EmbeddingProvider):
    """Precomputed vectors loaded from a CVEC file, looked up by id."""

    def __init__(self, path: str | Path):
        self._vectors = read_vectors(path)
        if not self._vectors:
            raise ValueError(f"{path}: vector file holds no records")
        self.dim = len(next(iter(self._vectors.values())))

    def _lookup(self, key: str | None) -> np.ndarray:
        if key is None:
            raise KeyError("file-backed provider requires an id key")
        try:
            return self._vectors[key]
        except KeyError:
            raise KeyError(f"no stored vector for id {key!r}") from None

    def embed_question(self, text: str, key: str | None = None) -> np.ndarray:
        return self._lookup(key)

    def embed_doc(self, text: str, key: str | None = None) -> np.ndarray:
        return self._lookup(key)

    def token_states(self, text: str) -> np.ndarray:
        raise NotImplementedError("file-backed provider stores one vector per id")


class ServiceProvider(EmbeddingProvider):
    """Adapter for an external embedding service speaking the line protocol."""

    def __init__(self, command: list[str], dim: int):
        self.dim = dim
        self._client = JsonLineClient(command)

    def _vector(self, payload: dict) -> np.ndarray:
        values = self._client.request(payload)["values"]
        vec = np.asarray(values, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"service returned shape {vec.shape}, expected ({self.dim},)")
        return vec

    def embed_question(self, text: str, key: str | None = None) -> np.ndarray:
        return self._vector({"op": "embed_question", "text": text})

    def embed_doc(self, text: str, key: str | None = None) -> np.ndarray:
        return self._vector({"op": "embed_doc", "text": text})

    def token_states(self, text: str) -> np.ndarray:
        values = self._client.request({"op": "token_states", "text": text})["values"]
        states = np.asarray(values, dtype=np.float32)
        if states.ndim != 2 or states.shape[1] != self.dim:
            raise ValueError(f"service returned shape {states.shape}, expected (n, {self.dim})")
        return states

    def close(self) -> None:
        self._client.close()


def write_vectors(path: str | Path, vectors: dict[str, np.ndarray]) -> None:
    """Persist id -> float32 vector mappings in the CVEC binary format."""
    dims = {len(v) for v in vectors.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent vector dims: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as fh:
        fh.write(CVEC_MAGIC)
        fh.write(struct.pack("<IIQ", CVEC_VERSION, dim, len(vectors)))
        for doc_id, vec in vectors.items():
            encoded = doc_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"id too long: {doc_id!r}")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_vectors(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CVEC_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, dim, count = struct.unpack("<IIQ", fh.read(16))
        if version != CVEC_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            doc_id = fh.read(id_len).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float32)
            vectors[doc_id] = vec
    return vectors
