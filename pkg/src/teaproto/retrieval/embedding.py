"""Deterministic default embedder: hashed token counts under a fixed random projection."""
from __future__ import annotations

import functools
import hashlib
import re
from collections import Counter
from typing import Protocol

import numpy as np

from . import kernels

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _digest(data: str, size: int) -> bytes:
    return hashlib.blake2b(data.encode("utf-8"), digest_size=size).digest()


def _row_bytes(seed: int, bucket: int, nbytes: int) -> bytes:
    if nbytes <= 64:
        return _digest(f"{seed}:{bucket}", nbytes)
    out = b""
    block = 0
    while len(out) < nbytes:
        out += _digest(f"{seed}:{bucket}:{block}", 64)
        block += 1
    return out[:nbytes]


@functools.lru_cache(maxsize=8)
def projection_table(dim: int, buckets: int, seed: int) -> np.ndarray:
    """The read-only ±1/sqrt(dim) matrix; shared by every embedder with the same settings."""
    nbytes = (dim + 7) // 8
    raw = np.frombuffer(b"".join(_row_bytes(seed, b, nbytes) for b in range(buckets)), dtype=np.uint8)
    bits = np.unpackbits(raw.reshape(buckets, nbytes), axis=1)[:, :dim]
    table = np.ascontiguousarray(np.where(bits == 1, 1.0, -1.0) / np.sqrt(dim))
    table.flags.writeable = False
    return table


class HashingEmbedder:
    """Token counts hashed into ``buckets`` slots, projected to ``dim`` via a ±1 matrix.

    Both the bucket hash and the projection are derived from blake2b, so vectors
    are identical across processes, platforms and numpy versions.
    """

    def __init__(self, dim: int = 64, buckets: int = 4096, seed: int = 0x7EA):
        if dim < 1 or buckets < 1:
            raise ValueError("dim and buckets must be positive")
        self.dim = dim
        self.buckets = buckets
        self.seed = seed
        self._table = projection_table(dim, buckets, seed)

    def bucket(self, token: str) -> int:
        return int.from_bytes(_digest(token, 8), "little") % self.buckets

    def embed(self, text: str) -> np.ndarray:
        counts = Counter(self.bucket(t) for t in tokenize(text))
        if not counts:
            return np.zeros(self.dim, dtype=np.float64)
        rows = np.fromiter(sorted(counts), dtype=np.intp)
        weights = np.array([counts[r] for r in rows], dtype=np.float64)
        return kernels.accumulate_rows(self._table, rows, weights)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either side is the zero vector."""
    return float(kernels.cosine_scores(np.asarray(a, dtype=np.float64).reshape(1, -1), np.asarray(b, dtype=np.float64))[0])
