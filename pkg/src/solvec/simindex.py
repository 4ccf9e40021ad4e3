"""Normalized-Euclidean similarity and pairwise threshold scans.

Similarity of two element vectors is 1 - |e1-e2| / (|e1|+|e2|), bounded in
[0, 1]. The metric is deliberately size-sensitive: similarity(a, 2a) = 2/3.
All score arithmetic runs in float64; matrix rows are stored in float32 and
widened on read, so byte-identical normalized streams score exactly 1.0.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .embedding import CodeVector, ElementRef, EmbeddingMatrix
from .errors import ConfigError, SolvecError

# score >= 1 is unreachable with a strict inequality, so a threshold of
# exactly 1.0 means "within epsilon of 1".
EXACT_EPSILON = 1e-9


def _as_array(vec) -> np.ndarray:
    if isinstance(vec, CodeVector):
        return np.asarray(vec.values, dtype=np.float64)
    return np.asarray(vec, dtype=np.float64)


def similarity(e1, e2) -> float:
    """1 - |e1-e2| / (|e1|+|e2|); two zero vectors count as identical."""
    a = _as_array(e1)
    b = _as_array(e2)
    if a.shape != b.shape:
        raise SolvecError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    numerator = float(np.sqrt(np.dot(diff, diff)))
    denominator = float(np.sqrt(np.dot(a, a))) + float(np.sqrt(np.dot(b, b)))
    if denominator == 0.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - numerator / denominator))


def check_threshold(delta: float) -> float:
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"similarity threshold must be in [0, 1], got {delta}")
    return float(delta)


def matches_threshold(score: float, delta: float) -> bool:
    if delta >= 1.0:
        return score >= 1.0 - EXACT_EPSILON
    return score > delta


@dataclass(frozen=True)
class PairMatrix:
    query_refs: tuple[ElementRef, ...]
    target_refs: tuple[ElementRef, ...]
    scores: np.ndarray  # Q x T float64

    def is_self(self, qi: int, ti: int) -> bool:
        return self.query_refs[qi] == self.target_refs[ti]


def _rows_and_refs(matrix) -> tuple[np.ndarray, tuple[ElementRef, ...]]:
    if isinstance(matrix, EmbeddingMatrix):
        return matrix.rows.astype(np.float64), matrix.refs
    rows = np.asarray(matrix, dtype=np.float64)
    refs = tuple(ElementRef("", "contract", f"{i}_{i}", i) for i in range(rows.shape[0]))
    return rows, refs


def _score_block(queries: np.ndarray, q_norms: np.ndarray,
                 targets: np.ndarray, t_norms: np.ndarray) -> np.ndarray:
    scores = np.empty((queries.shape[0], targets.shape[0]), dtype=np.float64)
    for i in range(queries.shape[0]):
        diff = targets - queries[i]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        denom = q_norms[i] + t_norms
        with np.errstate(invalid="ignore", divide="ignore"):
            row = 1.0 - dist / denom
        row[denom == 0.0] = 1.0
        np.clip(row, 0.0, 1.0, out=row)
        scores[i] = row
    return scores


def _norms(rows: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", rows, rows))


def pairwise(queries, targets) -> PairMatrix:
    """Full Q x T score matrix (use :func:`scan_pairs` for large inputs)."""
    q_rows, q_refs = _rows_and_refs(queries)
    t_rows, t_refs = _rows_and_refs(targets)
    if q_rows.shape[1] != t_rows.shape[1]:
        raise SolvecError("dimension mismatch between query and target matrices")
    scores = _score_block(q_rows, _norms(q_rows), t_rows, _norms(t_rows))
    return PairMatrix(q_refs, t_refs, scores)


def _row_hits(row: np.ndarray, delta: float) -> np.ndarray:
    if delta >= 1.0:
        return np.nonzero(row >= 1.0 - EXACT_EPSILON)[0]
    return np.nonzero(row > delta)[0]


def _collect_row(q_ref, row, t_refs, delta):
    hits = [(int(ti), float(row[ti])) for ti in _row_hits(row, delta)
            if t_refs[ti] != q_ref]
    hits.sort(key=lambda h: (-h[1], h[0]))
    return [(q_ref, t_refs[ti], score) for ti, score in hits]


def threshold_pairs(matrix: PairMatrix, delta: float):
    """Non-self pairs above threshold, ordered by (query, -score, target)."""
    delta = check_threshold(delta)
    results = []
    for qi, q_ref in enumerate(matrix.query_refs):
        results += _collect_row(q_ref, matrix.scores[qi], matrix.target_refs, delta)
    return results


def scan_pairs(queries, targets, delta: float, block: int = 512):
    """Threshold scan that never materializes the full Q x T matrix."""
    delta = check_threshold(delta)
    q_rows, q_refs = _rows_and_refs(queries)
    t_rows, t_refs = _rows_and_refs(targets)
    if q_rows.shape[1] != t_rows.shape[1]:
        raise SolvecError("dimension mismatch between query and target matrices")
    t_norms = _norms(t_rows)
    results = []
    for start in range(0, q_rows.shape[0], block):
        chunk = q_rows[start:start + block]
        chunk_norms = _norms(chunk)
        scores = _score_block(chunk, chunk_norms, t_rows, t_norms)
        for local in range(chunk.shape[0]):
            results += _collect_row(q_refs[start + local], scores[local], t_refs, delta)
    return results


def benchmark_similarity(n_pairs: int = 10_000_000, dim: int = 150,
                         seed: int = 7, block: int = 4096) -> float:
    """Measured seconds per scored pair over ``n_pairs`` random vector pairs."""
    rng = np.random.default_rng(seed)
    queries = rng.standard_normal((block, dim))
    targets = rng.standard_normal((block, dim))
    q_norms = _norms(queries)
    t_norms = _norms(targets)
    per_round = block * block
    rounds = max(1, (n_pairs + per_round - 1) // per_round)
    _score_block(queries[:8], q_norms[:8], targets, t_norms)  # warm-up
    start = time.perf_counter()
    for _ in range(rounds):
        _score_block(queries, q_norms, targets, t_norms)
    elapsed = time.perf_counter() - start
    return elapsed / (rounds * per_round)
