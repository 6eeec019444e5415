"""Pure numpy versions of the compiled kernels."""
from __future__ import annotations

import numpy as np


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    if query.shape[0] != matrix.shape[1]:
        raise ValueError("query dimension does not match matrix")
    out = np.zeros(matrix.shape[0], dtype=np.float64)
    qn = float(np.sqrt(query @ query))
    if qn == 0.0 or matrix.shape[0] == 0:
        return out
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    nz = norms != 0.0
    out[nz] = (matrix[nz] @ query) / (norms[nz] * qn)
    return np.clip(out, -1.0, 1.0)


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    k = max(0, min(int(k), scores.shape[0]))
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return order[:k].astype(np.intp)


def accumulate_rows(table: np.ndarray, rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if len(rows) == 0:
        return np.zeros(table.shape[1], dtype=np.float64)
    return np.asarray(weights, dtype=np.float64) @ table[np.asarray(rows, dtype=np.intp)]
