"""Single-hop vs multi-hop question routing on question embeddings.

A logistic classifier over the question vector decides whether to run the
linker. Ties go to multi-hop: dropping a reasoning chain is worse than
scoring a few extra candidates.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hashing import stream_rng

CRTR_MAGIC = b"CRTR"

SINGLE_HOP = "single-hop"
MULTI_HOP = "multi-hop"


@dataclass
class LinearClassifier:
    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError("w must be a vector")
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("classifier parameters must be finite")

    @property
    def dim(self) -> int:
        return len(self.w)

    def decision(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.w.shape:
            raise ValueError(f"input shape {x.shape} != ({self.dim},)")
        return float(self.w @ x + self.b)

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(CRTR_MAGIC)
            fh.write(struct.pack("<I", self.dim))
            fh.write(self.w.astype("<f8").tobytes())
            fh.write(struct.pack("<d", self.b))

    @classmethod
    def load(cls, path: str | Path) -> "LinearClassifier":
        with open(path, "rb") as fh:
            if fh.read(4) != CRTR_MAGIC:
                raise ValueError(f"{path}: not a router model file")
            (dim,) = struct.unpack("<I", fh.read(4))
            w = np.frombuffer(fh.read(8 * dim), dtype="<f8").copy()
            (b,) = struct.unpack("<d", fh.read(8))
        return cls(w, b)


def train_logistic(
    embeddings: np.ndarray,
    labels: Sequence[int],
    epochs: int = 200,
    lr: float = 1.0,
    seed: int = 0,
    batch_size: int | None = None,
) -> LinearClassifier:
    """Gradient descent on the logistic loss; label 1 = multi-hop.

    Full-batch by default; pass ``batch_size`` for seeded mini-batch SGD.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("embeddings and labels must align")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    n, dim = x.shape
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    rng = stream_rng(seed, "train-router")
    order = np.arange(n)
    for _ in range(epochs):
        if batch_size is None:
            batches = [order]
        else:
            rng.shuffle(order)
            batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
        for batch in batches:
            xb, yb = x[batch], y[batch]
            p = 1.0 / (1.0 + np.exp(-(xb @ w + b)))
            delta = p - yb
            w -= lr * (xb.T @ delta) / len(batch)
            b -= lr * float(delta.mean())
    return LinearClassifier(w, b)


def logistic_loss(classifier: LinearClassifier, embeddings: np.ndarray, labels: Sequence[int]) -> float:
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    z = x @ classifier.w + classifier.b
    # log(1 + exp(-|z|)) + max(0, -yz) form keeps this stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def route(question_vec: np.ndarray, classifier: LinearClassifier) -> str:
    """"multi-hop" runs the linker and chainer; "single-hop" scores singletons only."""
    return MULTI_HOP if classifier.decision(question_vec) >= 0.0 else SINGLE_HOP
