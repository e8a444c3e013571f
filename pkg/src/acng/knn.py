"""K-nearest-neighbor base graphs: brute force for small n, NN-descent above."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from acng import _kernels
from acng._parallel import for_chunks
from acng.core import ProximityGraph, as_dataset
from acng.errors import UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnnParams:
    K: int = 200
    iters: int = 10
    sample_rate: float = 0.5
    seed: int = 0
    exact_threshold: int = 10_000
    # rounds stop early once fewer than this fraction of entries change
    min_change: float = 0.001

    def __post_init__(self):
        if self.K < 1:
            raise UsageError(f"K must be >= 1, got {self.K}")
        if self.iters < 1:
            raise UsageError(f"iters must be >= 1, got {self.iters}")
        if not 0 < self.sample_rate <= 1:
            raise UsageError(f"sample_rate must be in (0, 1], got {self.sample_rate}")


@dataclass
class KnnResult:
    ids: np.ndarray  # (n, K) ascending by (distance, id)
    dists: np.ndarray
    n_dist: int
    rounds: int
    kth_sums: list  # sum of K-th neighbor distances after init and after each round

    def graph(self, entry_point: int = 0) -> ProximityGraph:
        n, K = self.ids.shape
        indptr = np.arange(0, n * K + 1, K, dtype=np.int64)
        return ProximityGraph(indptr, self.ids.reshape(-1), entry_point, max_degree=K)


def exact_knn(data, K: int, block: int = 512) -> KnnResult:
    """Brute-force K-NN with (distance, id) ordering.

    A BLAS pass over |x|^2 + |y|^2 - 2xy shortlists each row; the shortlist is
    widened to everything within a small slack of the K-th value and then
    ranked on directly computed distances, so the result matches a naive scan.
    """
    ds = as_dataset(data)
    n = ds.n
    if not 1 <= K < n:
        raise UsageError(f"need 1 <= K < n, got K={K}, n={n}")
    x = ds.data.astype(np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    ids = np.empty((n, K), np.int64)
    dists = np.empty((n, K), np.float64)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (x[lo:hi] @ x.T)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        kth = np.partition(d2, K - 1, axis=1)[:, K - 1]
        slack = 1e-9 * (sq[lo:hi] + sq.max()) + 1e-12
        for r in range(hi - lo):
            p = lo + r
            short = np.flatnonzero(d2[r] <= kth[r] + slack[r])
            short = short[short != p]
            d = _kernels.dists_to(ds.data, p, short)
            s_id, s_d = _kernels.sort_by_dist_id(short, d)
            ids[p] = s_id[:K]
            dists[p] = s_d[:K]
    return KnnResult(ids, dists, n_dist=n * (n - 1), rounds=0, kth_sums=[float(dists[:, -1].sum())])


def nn_descent(data, params: KnnParams, threads: int | None = None) -> KnnResult:
    """Approximate K-NN by neighbor-of-neighbor refinement from a random start.

    Each round proposes, for every v, the neighbors of a sampled subset of v's
    forward and reverse neighbors and keeps the best K of old list and
    proposals. Proposals read only the previous round's lists.
    """
    ds = as_dataset(data)
    n, K = ds.n, params.K
    if not K < n:
        raise UsageError(f"need K < n, got K={K}, n={n}")
    rng = np.random.default_rng(params.seed)
    nbr = np.empty((n, K), np.int64)
    for v in range(n):
        pick = rng.choice(n - 1, size=K, replace=False)
        pick[pick >= v] += 1
        nbr[v] = pick
    nd = np.empty((n, K), np.float64)
    for v in range(n):
        s_id, s_d = _kernels.sort_by_dist_id(nbr[v], _kernels.dists_to(ds.data, v, nbr[v]))
        nbr[v] = s_id
        nd[v] = s_d
    n_dist = n * K
    sums = [float(nd[:, -1].sum())]
    rounds = 0
    for _ in range(params.iters):
        rev_indptr, rev_indices = _reverse(nbr)
        fwd_keep = rng.random((n, K)) < params.sample_rate
        rev_keep = rng.random(rev_indices.shape[0]) < params.sample_rate
        new_nbr = np.empty_like(nbr)
        new_nd = np.empty_like(nd)
        parts: dict = {}

        def run(lo, hi):
            parts[lo] = _kernels.nn_descent_round(
                ds.data, nbr, nd, rev_indptr, rev_indices, fwd_keep, rev_keep, lo, hi, new_nbr, new_nd
            )

        for_chunks(n, threads, run, min_chunk=256)
        changed = sum(int(c) for c, _ in parts.values())
        n_dist += sum(int(d) for _, d in parts.values())
        nbr, nd = new_nbr, new_nd
        rounds += 1
        sums.append(float(nd[:, -1].sum()))
        frac = changed / (n * K)
        log.debug("nn-descent round %d: %.4f of entries changed", rounds, frac)
        if frac < params.min_change:
            break
    return KnnResult(nbr, nd, n_dist=n_dist, rounds=rounds, kth_sums=sums)


def _reverse(nbr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, K = nbr.shape
    src = np.repeat(np.arange(n, dtype=np.int64), K)
    dst = nbr.reshape(-1)
    order = np.argsort(dst, kind="stable")
    counts = np.bincount(dst, minlength=n)
    indptr = np.zeros(n + 1, np.int64)
    indptr[1:] = np.cumsum(counts)
    return indptr, src[order]


def knn_search(data, params: KnnParams, threads: int | None = None) -> KnnResult:
    ds = as_dataset(data)
    if not 1 <= params.K < ds.n:
        raise UsageError(f"need 1 <= K < n, got K={params.K}, n={ds.n}")
    if ds.n <= params.exact_threshold:
        return exact_knn(ds, params.K)
    return nn_descent(ds, params, threads)


def build_knn_graph(data, params: KnnParams, threads: int | None = None) -> ProximityGraph:
    """K-NN graph with out-lists sorted ascending by distance; entry point is vertex 0."""
    return knn_search(data, params, threads).graph()
