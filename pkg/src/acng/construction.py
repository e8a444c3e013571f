"""Practical alpha-CNG construction.

Four phases:

1. K-NN base graph G0 and a navigating node s (beam search for the centroid).
2. For each p, a beam search on G0 from s gathers every point it touched; the
   C nearest become p's candidates and are pruned to at most M neighbors.
3. Every edge u -> v is mirrored as v -> u. Each node merges its reverse
   edges with its own list once; only lists longer than M are re-pruned.
4. Vertices unreachable from s are attached to the nearest reachable vertex
   a beam search can find.

Phases 1 and the search part of 2 do not depend on tau or the pruning rule;
``prepare_candidates`` exposes them so tau sweeps can reuse the work.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from acng import _kernels
from acng._parallel import for_chunks
from acng.core import ProximityGraph, as_dataset
from acng.errors import ConstructionError, UsageError
from acng.knn import KnnParams, knn_search
from acng.pruning import AdaptiveSchedule, Neighbors, PruneRule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CngParams:
    knn: KnnParams = field(default_factory=KnnParams)
    M: int = 70
    L: int = 60
    C: int = 500
    alpha0: float = 0.9
    alpha_max: float = 1.6
    d_alpha: float = 0.05
    tau: float = 0.0
    # single prune pass at this alpha instead of the adaptive loop
    fixed_alpha: float | None = None
    # any PruneRule, applied as a single capped pass (baseline rule swaps)
    rule_override: PruneRule | None = None
    seed: int = 0

    def __post_init__(self):
        if self.M < 2:
            raise UsageError(f"M must be >= 2, got {self.M}")
        if self.C < self.M:
            raise UsageError(f"C must be >= M, got C={self.C}, M={self.M}")
        if self.L < 1:
            raise UsageError(f"L must be >= 1, got {self.L}")
        if not self.tau >= 0:
            raise UsageError(f"tau must be >= 0, got {self.tau}")
        if self.fixed_alpha is not None and not self.fixed_alpha > 0:
            raise UsageError(f"fixed_alpha must be > 0, got {self.fixed_alpha}")
        self.sched  # validates the alpha schedule

    @property
    def sched(self) -> AdaptiveSchedule:
        return AdaptiveSchedule(M=self.M, alpha0=self.alpha0, alpha_max=self.alpha_max,
                                d_alpha=self.d_alpha)

    def single_rule(self) -> PruneRule | None:
        """The rule for single-pass pruning, or None for the adaptive loop."""
        if self.rule_override is not None:
            return self.rule_override
        if self.fixed_alpha is not None:
            return PruneRule.shifted_scaled(self.fixed_alpha, self.tau)
        return None


@dataclass
class BuildReport:
    seconds: dict = field(default_factory=dict)
    ndc: dict = field(default_factory=dict)
    adaptive_calls: dict = field(default_factory=lambda: {"phase2": 0, "phase3": 0})
    exhausted: int = 0
    repaired: int = 0
    entry_point: int = -1
    max_degree: int = 0
    mean_degree: float = 0.0

    def to_dict(self) -> dict:
        return {
            "entry_point": self.entry_point,
            "max_degree": self.max_degree,
            "mean_degree": round(self.mean_degree, 6),
            "repaired": self.repaired,
            "adaptive_calls": dict(self.adaptive_calls),
            "alpha_max_exhausted": self.exhausted,
            "ndc": dict(self.ndc),
            "seconds": {k: round(v, 6) for k, v in self.seconds.items()},
        }

    def to_json(self, timings: bool = True) -> str:
        d = self.to_dict()
        if not timings:
            d.pop("seconds")
        return json.dumps(d, indent=2)


@dataclass
class CandidatePool:
    """Output of phase 1 plus the candidate lists of phase 2."""

    base: ProximityGraph
    entry: int
    ids: np.ndarray  # (n, C), padded with -1
    dists: np.ndarray
    counts: np.ndarray
    seconds: dict
    ndc: dict

    def candidates(self, p: int) -> Neighbors:
        c = self.counts[p]
        return Neighbors(self.ids[p, :c], self.dists[p, :c])


def select_navigating_node(base: ProximityGraph, data, L: int, seed: int = 0) -> tuple[int, int]:
    """Approximate nearest point to the centroid, found by beam search from a
    seeded random vertex. Returns (vertex, distance evaluations)."""
    ds = as_dataset(data)
    centroid = ds.data.astype(np.float64).mean(axis=0)
    start = int(np.random.default_rng(seed).integers(ds.n))
    ids, _, ndc, _, _, _, _ = _kernels.beam_search(
        ds.data, base.starts, base.ends, base.indices, centroid, start, max(1, L), False
    )
    return int(ids[0]), int(ndc)


def generate_candidates(base: ProximityGraph, data, p: int, s: int, L: int, C: int) -> tuple[Neighbors, int]:
    """The C nearest points among all points a beam search for p touched.

    Returns (candidates ascending by (distance, id), distance evaluations).
    """
    ds = as_dataset(data)
    return _candidates(ds.data, base, p, s, L, C)


def _candidates(arr, base: ProximityGraph, p: int, s: int, L: int, C: int) -> tuple[Neighbors, int]:
    _, _, ndc, _, _, vid, vd = _kernels.beam_search(arr, base.starts, base.ends, base.indices, arr[p], s, L, True)
    keep = vid != p
    ids, d = _kernels.sort_by_dist_id(vid[keep], vd[keep])
    return Neighbors(ids[:C], d[:C]), int(ndc)


def prepare_candidates(data, params: CngParams, threads: int | None = None) -> CandidatePool:
    ds = as_dataset(data)
    n = ds.n
    if n < 2:
        raise UsageError("construction needs at least two points")
    seconds, ndc = {}, {}

    t0 = time.perf_counter()
    knn_params = params.knn if params.knn.K < n else replace(params.knn, K=n - 1)
    knn = knn_search(ds, knn_params, threads)
    base = knn.graph()
    s, nav_ndc = select_navigating_node(base, ds, params.L, params.seed)
    seconds["phase1"] = time.perf_counter() - t0
    ndc["phase1"] = knn.n_dist + nav_ndc

    t0 = time.perf_counter()
    C = params.C
    ids = np.full((n, C), -1, np.int64)
    dists = np.full((n, C), np.inf)
    counts = np.zeros(n, np.int64)
    search_ndc = np.zeros(n, np.int64)

    def run(lo, hi):
        for p in range(lo, hi):
            cand, k = _candidates(ds.data, base, p, s, params.L, C)
            m = len(cand)
            ids[p, :m] = cand.ids
            dists[p, :m] = cand.dists
            counts[p] = m
            search_ndc[p] = k

    for_chunks(n, threads, run)
    seconds["phase2_search"] = time.perf_counter() - t0
    ndc["phase2_search"] = int(search_ndc.sum())
    return CandidatePool(base, s, ids, dists, counts, seconds, ndc)


def _prune(arr, cand: Neighbors, params: CngParams):
    """(ids, dists, distance evaluations, used_adaptive, exhausted)."""
    rule = params.single_rule()
    if rule is None:
        pos, nd, _, exh = _kernels.adaptive_scan(
            arr, cand.ids, cand.dists, params.M, params.alpha0, params.alpha_max,
            params.d_alpha, params.tau, True, True,
        )
        return cand.ids[pos], cand.dists[pos], int(nd), True, bool(exh)
    pos, nd = _kernels.prune_scan(arr, cand.ids, cand.dists, int(rule.kind), rule.alpha, rule.tau, params.M)
    return cand.ids[pos], cand.dists[pos], int(nd), False, False


def build_cng(data, params: CngParams = CngParams(), threads: int | None = None,
              pool: CandidatePool | None = None) -> tuple[ProximityGraph, BuildReport]:
    """Build an alpha-CNG. ``pool`` (from ``prepare_candidates`` with the same
    data, knn, L, C and seed) skips phase 1 and the phase-2 searches."""
    ds = as_dataset(data)
    arr = ds.data
    n = ds.n
    if pool is None:
        pool = prepare_candidates(ds, params, threads)
    report = BuildReport(seconds=dict(pool.seconds), ndc=dict(pool.ndc))
    s = pool.entry
    M = params.M

    # phase 2: prune candidates
    t0 = time.perf_counter()
    nbr: list = [None] * n
    nbd: list = [None] * n
    p2_nd = np.zeros(n, np.int64)
    p2_adaptive = np.zeros(n, bool)
    p2_exh = np.zeros(n, bool)

    def run2(lo, hi):
        for p in range(lo, hi):
            ids, d, nd, ad, ex = _prune(arr, pool.candidates(p), params)
            nbr[p], nbd[p], p2_nd[p], p2_adaptive[p], p2_exh[p] = ids, d, nd, ad, ex

    for_chunks(n, threads, run2)
    report.seconds["phase2_prune"] = time.perf_counter() - t0
    report.ndc["phase2_prune"] = int(p2_nd.sum())
    report.adaptive_calls["phase2"] = int(p2_adaptive.sum())

    # phase 3: mirror every edge into per-node buffers, then merge and prune once
    t0 = time.perf_counter()
    deg = np.array([len(x) for x in nbr], np.int64)
    src = np.repeat(np.arange(n, dtype=np.int64), deg)
    dst = np.concatenate(nbr) if deg.sum() else np.zeros(0, np.int64)
    order = np.argsort(dst, kind="stable")
    back_src = src[order]
    back_ptr = np.zeros(n + 1, np.int64)
    back_ptr[1:] = np.cumsum(np.bincount(dst, minlength=n))
    p3_nd = np.zeros(n, np.int64)
    p3_adaptive = np.zeros(n, bool)
    p3_exh = np.zeros(n, bool)
    out_ids: list = [None] * n
    out_d: list = [None] * n

    def run3(lo, hi):
        for p in range(lo, hi):
            back = back_src[back_ptr[p]:back_ptr[p + 1]]
            new = np.setdiff1d(back, nbr[p], assume_unique=False)
            if new.size == 0:
                out_ids[p], out_d[p] = nbr[p], nbd[p]
                continue
            nd_new = _kernels.dists_to(arr, p, new)
            ids, d = _kernels.sort_by_dist_id(np.concatenate((nbr[p], new)), np.concatenate((nbd[p], nd_new)))
            cost = new.size
            if ids.shape[0] > M:
                ids, d, nd, ad, ex = _prune(arr, Neighbors(ids, d), params)
                cost += nd
                p3_adaptive[p], p3_exh[p] = ad, ex
            out_ids[p], out_d[p], p3_nd[p] = ids, d, cost

    for_chunks(n, threads, run3)
    report.seconds["phase3"] = time.perf_counter() - t0
    report.ndc["phase3"] = int(p3_nd.sum())
    report.adaptive_calls["phase3"] = int(p3_adaptive.sum())
    report.exhausted = int(p2_exh.sum() + p3_exh.sum())

    # phase 4: connectivity repair
    t0 = time.perf_counter()
    table = _Padded(out_ids, out_d, M)
    repaired, rep_ndc = _repair(arr, table, s, params.L, M)
    report.seconds["phase4"] = time.perf_counter() - t0
    report.ndc["phase4"] = rep_ndc
    report.repaired = repaired

    graph = table.graph(entry_point=s, max_degree=M)
    degs = graph.degrees()
    report.entry_point = s
    report.max_degree = int(degs.max(initial=0))
    report.mean_degree = float(degs.mean())
    log.info("built alpha-CNG: n=%d, mean degree %.2f, %d repaired", n, report.mean_degree, repaired)
    return graph, report


def repair_connectivity(graph: ProximityGraph, data, s: int | None = None, L: int = 60,
                        M: int | None = None) -> tuple[ProximityGraph, int]:
    """Attach every vertex unreachable from ``s`` to the graph.

    Returns the repaired graph and the number of attachments made. Out-degree
    never exceeds ``M`` (default: the graph's max_degree).
    """
    ds = as_dataset(data)
    s = graph.entry_point if s is None else int(s)
    M = graph.max_degree if M is None else int(M)
    ids = [graph.neighbors(u) for u in range(graph.n)]
    d = [_kernels.dists_to(ds.data, u, nb) for u, nb in enumerate(ids)]
    table = _Padded(ids, d, max(M, graph.max_degree))
    repaired, _ = _repair(ds.data, table, s, L, M)
    return table.graph(entry_point=s, max_degree=max(M, graph.max_degree)), repaired


class _Padded:
    """Fixed-width adjacency table that supports in-place sorted insertion."""

    def __init__(self, ids, dists, width: int):
        n = len(ids)
        self.nbr = np.full((n, width), -1, np.int64)
        self.nd = np.full((n, width), np.inf)
        self.deg = np.zeros(n, np.int64)
        for u in range(n):
            k = len(ids[u])
            self.nbr[u, :k] = ids[u]
            self.nd[u, :k] = dists[u]
            self.deg[u] = k
        self.starts = np.arange(n, dtype=np.int64) * width
        self.flat = self.nbr.reshape(-1)

    @property
    def ends(self) -> np.ndarray:
        return self.starts + self.deg

    def attach(self, t: int, p: int, d: float, M: int) -> bool:
        """Add t -> p keeping the row sorted; at degree M evict the farthest
        entry if p is nearer, otherwise refuse."""
        k = int(self.deg[t])
        row, rd = self.nbr[t], self.nd[t]
        if np.any(row[:k] == p):
            return True
        if k >= M:
            if not (d, p) < (rd[k - 1], row[k - 1]):
                return False
            k -= 1
        at = k
        while at > 0 and (d, p) < (rd[at - 1], row[at - 1]):
            at -= 1
        row[at + 1:k + 1] = row[at:k]
        rd[at + 1:k + 1] = rd[at:k]
        row[at] = p
        rd[at] = d
        self.deg[t] = k + 1
        return True

    def graph(self, entry_point: int, max_degree: int) -> ProximityGraph:
        indptr = np.zeros(self.deg.shape[0] + 1, np.int64)
        indptr[1:] = np.cumsum(self.deg)
        mask = np.arange(self.nbr.shape[1])[None, :] < self.deg[:, None]
        return ProximityGraph(indptr, self.nbr[mask], entry_point, max_degree)


def _repair(arr, table: _Padded, s: int, L: int, M: int, max_rounds: int = 100) -> tuple[int, int]:
    """In-place repair. Returns (attachments, distance evaluations)."""
    n = table.deg.shape[0]
    repaired = 0
    ndc = 0
    for _ in range(max_rounds):
        reach = np.zeros(n, np.bool_)
        _kernels.mark_reachable(table.starts, table.ends, table.flat, s, reach)
        if reach.all():
            return repaired, ndc
        for p in np.flatnonzero(~reach):
            p = int(p)
            if reach[p]:
                continue
            _, _, k, _, _, vid, vd = _kernels.beam_search(
                arr, table.starts, table.ends, table.flat, arr[p], s, max(1, L), True
            )
            ndc += int(k)
            vid, vd = _kernels.sort_by_dist_id(vid, vd)
            attached = False
            for t, d in zip(vid.tolist(), vd.tolist()):
                if t != p and reach[t] and table.attach(t, p, d, M):
                    attached = True
                    break
            if not attached:
                # every vertex the search saw is full of nearer neighbors; widen to all reachable ones
                cand = np.flatnonzero(reach).astype(np.int64)
                cd = _kernels.dists_to(arr, p, cand)
                ndc += cand.size
                cid, cd = _kernels.sort_by_dist_id(cand, cd)
                for t, d in zip(cid.tolist(), cd.tolist()):
                    if table.attach(t, p, d, M):
                        attached = True
                        break
            if not attached:
                raise ConstructionError(f"vertex {p} cannot be attached without exceeding M={M}")
            repaired += 1
            _kernels.mark_reachable(table.starts, table.ends, table.flat, p, reach)
    raise ConstructionError(f"connectivity repair did not converge in {max_rounds} rounds")
