"""Beam search and greedy routing with per-query cost counters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from acng import _kernels
from acng._parallel import for_chunks
from acng.core import Dataset, ProximityGraph, as_dataset
from acng.errors import UsageError


@dataclass(frozen=True)
class SearchParams:
    L: int
    k: int = 1
    entry: int | None = None

    def __post_init__(self):
        if self.k < 1 or self.L < self.k:
            raise UsageError(f"need L >= k >= 1, got L={self.L}, k={self.k}")


@dataclass(frozen=True)
class SearchStats:
    """ndc: distance evaluations; hops: hop vertices explored; visited: distinct vertices touched."""

    ndc: int
    hops: int
    visited: int


@dataclass
class SearchResult:
    ids: np.ndarray
    dists: np.ndarray
    stats: SearchStats
    path: np.ndarray
    visited_ids: np.ndarray | None = None
    visited_dists: np.ndarray | None = None


def _check_query(ds: Dataset, graph: ProximityGraph, query, entry) -> tuple[np.ndarray, int]:
    q = np.asarray(query)
    if q.ndim != 1 or q.shape[0] != ds.dim:
        raise UsageError(f"query dimension {q.shape} does not match dataset dim {ds.dim}")
    if graph.n != ds.n:
        raise UsageError(f"graph has {graph.n} vertices but dataset has {ds.n} points")
    s = graph.entry_point if entry is None else int(entry)
    if not 0 <= s < ds.n:
        raise UsageError(f"entry {s} out of range")
    if q.dtype != np.float32 and q.dtype != np.float64:
        q = q.astype(np.float64)
    return np.ascontiguousarray(q), s


def beam_search(graph: ProximityGraph, data, query, params: SearchParams,
                *, collect: bool = False) -> SearchResult:
    """Best-first search keeping the L closest discovered vertices.

    Returns the k closest members of the final queue (ascending, ties by id).
    With ``collect`` every vertex whose distance was computed is reported too.
    """
    ds = as_dataset(data)
    q, s = _check_query(ds, graph, query, params.entry)
    ids, d, ndc, hops, path, vis_id, vis_d = _kernels.beam_search(
        ds.data, graph.starts, graph.ends, graph.indices, q, s, params.L, collect
    )
    k = min(params.k, ids.shape[0])
    return SearchResult(
        ids=ids[:k].copy(),
        dists=d[:k].copy(),
        stats=SearchStats(ndc=int(ndc), hops=int(hops), visited=int(ndc)),
        path=path.copy(),
        visited_ids=vis_id if collect else None,
        visited_dists=vis_d if collect else None,
    )


def greedy_route(graph: ProximityGraph, data, query, entry: int | None = None):
    """Beam search with L = 1. Returns (terminal vertex, hop path, stats)."""
    r = beam_search(graph, data, query, SearchParams(L=1, k=1, entry=entry))
    return int(r.ids[0]), r.path, r.stats


@dataclass
class BatchResult:
    ids: np.ndarray
    ndc: np.ndarray
    hops: np.ndarray


def batch_search(graph: ProximityGraph, data, queries, L: int, k: int,
                 entry: int | None = None, threads: int | None = None) -> BatchResult:
    """Search every row of ``queries``; rows of ``ids`` are padded with -1 if fewer than k were found."""
    ds = as_dataset(data)
    qs = np.ascontiguousarray(queries.data if isinstance(queries, Dataset) else np.asarray(queries, np.float32))
    if qs.ndim != 2 or qs.shape[1] != ds.dim:
        raise UsageError(f"queries have shape {qs.shape}, dataset dim is {ds.dim}")
    SearchParams(L=L, k=k)
    s = graph.entry_point if entry is None else int(entry)
    nq = qs.shape[0]
    out_ids = np.empty((nq, k), np.int64)
    out_ndc = np.empty(nq, np.int64)
    out_hops = np.empty(nq, np.int64)

    def run(lo, hi):
        _kernels.batch_search(ds.data, graph.starts, graph.ends, graph.indices, qs, s, L, k, lo, hi,
                              out_ids, out_ndc, out_hops)

    for_chunks(nq, threads, run)
    return BatchResult(out_ids, out_ndc, out_hops)

