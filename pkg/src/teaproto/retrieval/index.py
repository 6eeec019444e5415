"""Exact cosine top-k index keyed by (kind, name)."""
from __future__ import annotations

import threading

import numpy as np

from ..types import ComponentKind
from . import kernels
from .embedding import Embedder, HashingEmbedder


class VectorIndex:
    def __init__(self, embedder: Embedder | None = None):
        self.embedder = embedder or HashingEmbedder()
        self.dim = self.embedder.dim
        self._lock = threading.RLock()
        self._vectors: dict[ComponentKind, dict[str, np.ndarray]] = {}
        # per-kind (sorted names, stacked matrix), rebuilt lazily after mutation
        self._packed: dict[ComponentKind, tuple[list[str], np.ndarray]] = {}

    def embed(self, text: str) -> np.ndarray:
        vec = np.asarray(self.embedder.embed(text), dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"embedder returned shape {vec.shape}, expected ({self.dim},)")
        return vec

    def upsert(self, kind: ComponentKind | str, name: str, text: str) -> np.ndarray:
        vec = self.embed(text)
        self.upsert_vector(kind, name, vec)
        return vec

    def upsert_vector(self, kind: ComponentKind | str, name: str, vector) -> None:
        kind = ComponentKind.parse(kind)
        vec = np.ascontiguousarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector has shape {vec.shape}, expected ({self.dim},)")
        with self._lock:
            self._vectors.setdefault(kind, {})[name] = vec
            self._packed.pop(kind, None)

    def remove(self, kind: ComponentKind | str, name: str) -> bool:
        kind = ComponentKind.parse(kind)
        with self._lock:
            found = self._vectors.get(kind, {}).pop(name, None) is not None
            self._packed.pop(kind, None)
            return found

    def clear(self, kind: ComponentKind | str | None = None) -> None:
        with self._lock:
            if kind is None:
                self._vectors.clear()
                self._packed.clear()
            else:
                kind = ComponentKind.parse(kind)
                self._vectors.pop(kind, None)
                self._packed.pop(kind, None)

    def vector(self, kind: ComponentKind | str, name: str) -> np.ndarray | None:
        with self._lock:
            vec = self._vectors.get(ComponentKind.parse(kind), {}).get(name)
            return None if vec is None else vec.copy()

    def keys(self, kind: ComponentKind | str) -> list[str]:
        with self._lock:
            return sorted(self._vectors.get(ComponentKind.parse(kind), {}))

    def __len__(self) -> int:
        with self._lock:
            return sum(len(v) for v in self._vectors.values())

    def _pack(self, kind: ComponentKind) -> tuple[list[str], np.ndarray]:
        with self._lock:
            packed = self._packed.get(kind)
            if packed is None:
                vectors = self._vectors.get(kind, {})
                names = sorted(vectors)
                matrix = np.ascontiguousarray(
                    np.stack([vectors[n] for n in names]) if names else np.zeros((0, self.dim))
                )
                packed = self._packed[kind] = (names, matrix)
            return packed

    def search_vector(self, kind: ComponentKind | str, query, k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        names, matrix = self._pack(ComponentKind.parse(kind))
        if not names:
            return []
        q = np.ascontiguousarray(query, dtype=np.float64)
        scores = kernels.cosine_scores(matrix, q)
        # rows are in name order, so index order breaks ties by ascending name
        return [(names[i], float(scores[i])) for i in kernels.top_k(scores, k)]

    def retrieve(self, kind: ComponentKind | str, query: str, k: int = 5) -> list[tuple[str, float]]:
        return self.search_vector(kind, self.embed(query), k)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                kind.value: {name: vec.tolist() for name, vec in sorted(vecs.items())}
                for kind, vecs in sorted(self._vectors.items(), key=lambda kv: kv[0].value)
                if vecs
            }
