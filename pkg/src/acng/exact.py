"""Quadratic reference graphs and exhaustive checks of their routing guarantees.

``build_exact`` runs the shortcut scan for every point against all other
points. With the shifted-scaled rule this yields the alpha-convergent graph;
the other rules give MRNG, slow-Vamana and tau-MG style baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from acng import _kernels
from acng._parallel import for_chunks
from acng.core import Dataset, ProximityGraph, as_dataset
from acng.errors import PreconditionError, UsageError
from acng.pruning import PruneRule

REL_TOL = 1e-6


@dataclass(frozen=True)
class ExactBuildParams:
    rule: PruneRule
    max_n: int = 20_000


def medoid(data) -> int:
    """Point nearest to the centroid (ties to the lower id)."""
    ds = as_dataset(data, unique=False)
    centroid = ds.data.astype(np.float64).mean(axis=0)
    d = _kernels.dists_to_vec(ds.data, centroid, np.arange(ds.n, dtype=np.int64))
    return int(np.argmin(d))


def build_exact(data, params: ExactBuildParams, threads: int | None = 1) -> ProximityGraph:
    ds = as_dataset(data)
    if ds.n < 2:
        raise UsageError("exact build needs at least two points")
    if ds.n > params.max_n:
        raise UsageError(f"exact build is quadratic; n={ds.n} exceeds max_n={params.max_n}")
    rule = params.rule
    rows: list = [None] * ds.n

    def run(lo, hi):
        for p in range(lo, hi):
            ids, _, _ = _kernels.exact_row(ds.data, p, int(rule.kind), rule.alpha, rule.tau)
            rows[p] = ids

    for_chunks(ds.n, threads, run)
    return ProximityGraph.from_lists(rows, entry_point=medoid(ds))


@dataclass
class ViolationReport:
    """Empty ``violations`` means the property holds; each entry is a tuple describing one witness."""

    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _nbr_min(graph: ProximityGraph, dcol: np.ndarray) -> np.ndarray:
    """For every vertex p, min over out-neighbors p' of dcol[p'] (inf if none)."""
    out = np.full(graph.n, np.inf)
    degs = graph.degrees()
    has = degs > 0
    if graph.n_edges:
        red = np.minimum.reduceat(dcol[graph.indices], graph.indptr[:-1][has])
        out[has] = red
    return out


def verify_alpha_reducible(graph: ProximityGraph, data, queries, tau: float, alpha: float,
                           rel_tol: float = REL_TOL) -> ViolationReport:
    """Check: for each query with NN v* (d(q, v*) <= tau), every p != v* has an
    out-neighbor p' with d(p', q) <= d(p, q) / alpha.

    Violations are (query index, p, d(p, q), best neighbor distance).
    """
    ds = as_dataset(data)
    qs = queries.data if isinstance(queries, Dataset) else np.asarray(queries, np.float32)
    if qs.ndim == 1:
        qs = qs[None, :]
    if qs.shape[1] != ds.dim:
        raise UsageError("query dimension does not match dataset")
    report = ViolationReport()
    all_ids = np.arange(ds.n, dtype=np.int64)
    for qi in range(qs.shape[0]):
        dq = _kernels.dists_to_vec(ds.data, qs[qi], all_ids)
        v_star = int(np.argmin(dq))
        if dq[v_star] > tau * (1 + rel_tol):
            raise PreconditionError(
                f"query {qi}: nearest-neighbor distance {dq[v_star]:.6g} exceeds tau={tau}"
            )
        best = _nbr_min(graph, dq)
        bound = dq / alpha + rel_tol * dq
        bad = np.flatnonzero(best > bound)
        bad = bad[bad != v_star]
        # ties for the NN: any vertex at the NN distance counts as an NN
        bad = bad[dq[bad] > dq[v_star]]
        report.checked += ds.n - 1
        report.violations.extend((qi, int(p), float(dq[p]), float(best[p])) for p in bad)
    return report


def verify_shortcut_reachable(graph: ProximityGraph, data, alpha: float,
                              rel_tol: float = REL_TOL) -> ViolationReport:
    """Check: for every ordered pair (p, z) with no edge p -> z, some out-neighbor
    p' of p has d(p', z) <= d(p, z) / alpha.

    Violations are (p, z, d(p, z), best neighbor distance).
    """
    ds = as_dataset(data)
    dmat = _kernels.pairwise(ds.data)
    report = ViolationReport()
    for p in range(ds.n):
        nb = graph.neighbors(p)
        best = dmat[nb].min(axis=0) if nb.size else np.full(ds.n, np.inf)
        open_pair = np.ones(ds.n, bool)
        open_pair[nb] = False
        open_pair[p] = False
        dpz = dmat[p]
        bad = np.flatnonzero(open_pair & (best > dpz / alpha + rel_tol * dpz))
        report.checked += int(open_pair.sum())
        report.violations.extend((p, int(z), float(dpz[z]), float(best[z])) for z in bad)
    return report


def mutual_exclusion_violations(graph: ProximityGraph, data, rule: PruneRule,
                                rel_tol: float = REL_TOL) -> list[tuple[int, int, int]]:
    """Triples (p, u, v) of retained neighbors where the nearer u would have pruned v.

    For the shifted-scaled rule the condition checked is
    d(p, v) <= alpha * d(u, v) + (alpha + 1) * tau, up to ``rel_tol``.
    """
    ds = as_dataset(data)
    out = _kernels.mutual_exclusion(ds.data, graph.indptr, graph.indices, int(rule.kind),
                                    rule.alpha, rule.tau, rel_tol)
    return [tuple(int(x) for x in row) for row in out]

