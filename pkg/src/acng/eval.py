"""Ground truth, recall and cost aggregation, L sweeps and tau selection."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from acng import _kernels
from acng.core import Dataset, Metric, ProximityGraph, as_dataset, read_ivecs, write_ivecs
from acng.errors import UsageError
from acng.search import batch_search

log = logging.getLogger(__name__)

CSV_HEADER = ("L", "recall_at_k", "mean_ndc", "mean_hops")
COARSE_TAUS = (10.0, 1.0, 0.1, 0.01, 0.001)


@dataclass
class GroundTruth:
    ids: np.ndarray  # (n_queries, k)
    dists: np.ndarray

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def save(self, path) -> None:
        write_ivecs(path, self.ids.astype(np.int32))

    @classmethod
    def load(cls, path) -> "GroundTruth":
        ids = read_ivecs(path).astype(np.int64)
        return cls(ids, np.full(ids.shape, np.nan))


def _queries(queries, dim: int) -> np.ndarray:
    qs = queries.data if isinstance(queries, Dataset) else np.asarray(queries, np.float32)
    if qs.ndim == 1:
        qs = qs[None, :]
    if qs.ndim != 2 or qs.shape[1] != dim:
        raise UsageError(f"queries have shape {qs.shape}, dataset dim is {dim}")
    return np.ascontiguousarray(qs, dtype=np.float32)


def compute_ground_truth(data, queries, k: int, metric: Metric = Metric.EuclideanL2,
                         *, method: str = "blas", block: int = 256) -> GroundTruth:
    """Exact top-k for every query, ties broken by id.

    ``method="blas"`` shortlists with a matrix product and re-ranks on directly
    computed distances; ``method="scan"`` evaluates every distance one by one.
    Both return identical results.
    """
    ds = as_dataset(data)
    if metric is not Metric.EuclideanL2:
        raise UsageError(f"unsupported metric {metric}")
    if not 1 <= k <= ds.n:
        raise UsageError(f"need 1 <= k <= n, got k={k}, n={ds.n}")
    qs = _queries(queries, ds.dim)
    m = qs.shape[0]
    ids = np.empty((m, k), np.int64)
    dists = np.empty((m, k), np.float64)
    all_ids = np.arange(ds.n, dtype=np.int64)
    if method == "scan":
        for i in range(m):
            d = _kernels.dists_to_vec(ds.data, qs[i], all_ids)
            s_id, s_d = _kernels.sort_by_dist_id(all_ids.copy(), d)
            ids[i], dists[i] = s_id[:k], s_d[:k]
        return GroundTruth(ids, dists)
    if method != "blas":
        raise UsageError(f"unknown ground-truth method {method!r}")
    x = ds.data.astype(np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        q = qs[lo:hi].astype(np.float64)
        qsq = np.einsum("ij,ij->i", q, q)
        d2 = qsq[:, None] + sq[None, :] - 2.0 * (q @ x.T)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        slack = 1e-9 * (qsq + sq.max()) + 1e-12
        for r in range(hi - lo):
            short = np.flatnonzero(d2[r] <= kth[r] + slack[r])
            d = _kernels.dists_to_vec(ds.data, qs[lo + r], short)
            s_id, s_d = _kernels.sort_by_dist_id(short, d)
            ids[lo + r], dists[lo + r] = s_id[:k], s_d[:k]
    return GroundTruth(ids, dists)


def recall_at_k(result: Iterable[int], truth: Sequence[int]) -> float:
    truth_set = set(int(t) for t in truth)
    if not truth_set:
        raise UsageError("truth list is empty")
    hit = truth_set.intersection(int(r) for r in result)
    return len(hit) / len(truth_set)


@dataclass(frozen=True)
class EvalRecord:
    L: int
    recall_at_k: float
    mean_ndc: float
    mean_hops: float

    def __post_init__(self):
        if not 0.0 <= self.recall_at_k <= 1.0:
            raise ValueError(f"recall {self.recall_at_k} outside [0, 1]")


def _mean_recall(found: np.ndarray, truth: np.ndarray) -> float:
    k = truth.shape[1]
    hits = 0
    for f, t in zip(found, truth):
        hits += np.intersect1d(f[f >= 0], t, assume_unique=True).size
    return hits / (k * truth.shape[0])


def sweep(graph: ProximityGraph, data, queries, truth: GroundTruth, k: int,
          L_list: Sequence[int], threads: int | None = None) -> list[EvalRecord]:
    """One record per L, ascending by L."""
    ds = as_dataset(data)
    qs = _queries(queries, ds.dim)
    if truth.ids.shape[0] != qs.shape[0]:
        raise UsageError(f"{qs.shape[0]} queries but ground truth has {truth.ids.shape[0]} rows")
    if truth.k < k:
        raise UsageError(f"ground truth holds {truth.k} ids per query, k={k} requested")
    gt = truth.ids[:, :k]
    records = []
    for L in sorted(set(int(x) for x in L_list)):
        if L < k:
            raise UsageError(f"L={L} is smaller than k={k}")
        res = batch_search(graph, ds, qs, L, k, threads=threads)
        records.append(EvalRecord(
            L=L,
            recall_at_k=_mean_recall(res.ids, gt),
            mean_ndc=float(res.ndc.mean()),
            mean_hops=float(res.hops.mean()),
        ))
    return records


def records_to_csv(records: Sequence[EvalRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(records, key=lambda r: r.L):
        w.writerow((r.L, f"{r.recall_at_k:.6f}", f"{r.mean_ndc:.4f}", f"{r.mean_hops:.4f}"))
    return buf.getvalue()


def write_csv(records: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def read_csv(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EvalRecord(int(r["L"]), float(r["recall_at_k"]), float(r["mean_ndc"]), float(r["mean_hops"]))
            for r in rows]


def first_reaching(records: Sequence[EvalRecord], target: float) -> EvalRecord | None:
    """The smallest-L record with recall >= target."""
    for r in sorted(records, key=lambda r: r.L):
        if r.recall_at_k >= target:
            return r
    return None


@dataclass
class TauTuning:
    tau: float
    # (tau, reached target, mean NDC at target or nan, best recall), in evaluation order
    table: list = field(default_factory=list)
    target_reached: bool = True

    def scores(self) -> dict:
        return {t: (reached, ndc, rec) for t, reached, ndc, rec in self.table}


def _score(records: Sequence[EvalRecord], target: float) -> tuple[bool, float, float]:
    best = max(r.recall_at_k for r in records)
    hit = first_reaching(records, target)
    return (hit is not None, hit.mean_ndc if hit else math.nan, best)


def _rank_key(tau: float, score: tuple[bool, float, float]):
    reached, ndc, best = score
    # reaching the target beats not reaching it; then lower NDC, or higher recall
    return (0, ndc, tau) if reached else (1, -best, tau)


def refine_grid(tau: float) -> list[float]:
    """Three log-spaced values centered on ``tau``, spanning its decade."""
    step = 10.0 ** 0.25
    return [tau / step, float(tau), tau * step]


def tune_tau(data, queries_dev, build_fn: Callable[[float], ProximityGraph],
             coarse: Sequence[float] = COARSE_TAUS, *, k: int = 100,
             L_list: Sequence[int] = (100, 150, 200, 300, 500), target: float = 0.90,
             truth: GroundTruth | None = None, threads: int | None = None) -> TauTuning:
    """Choose tau by mean NDC at the smallest L that reaches ``target`` recall@k.

    tau=0 and each coarse value are built and swept; the best nonzero coarse
    value is then refined with three values across its decade. If no
    candidate reaches the target, the one with the best recall wins. Ties go
    to the smaller tau.
    """
    ds = as_dataset(data)
    qs = _queries(queries_dev, ds.dim)
    if truth is None:
        truth = compute_ground_truth(ds, qs, k)
    scores: dict[float, tuple[bool, float, float]] = {}
    order: list[float] = []

    def evaluate(tau: float):
        tau = float(tau)
        if tau in scores:
            return
        graph = build_fn(tau)
        scores[tau] = _score(sweep(graph, ds, qs, truth, k, L_list, threads), target)
        order.append(tau)
        log.info("tau=%g: reached=%s ndc=%.1f best recall=%.4f", tau, *scores[tau])

    evaluate(0.0)
    nonzero = sorted({float(t) for t in coarse if t > 0})
    if any(t < 0 for t in coarse):
        raise UsageError("coarse tau values must be >= 0")
    for t in nonzero:
        evaluate(t)
    if nonzero:
        lead = min(nonzero, key=lambda t: _rank_key(t, scores[t]))
        for t in refine_grid(lead):
            evaluate(t)
    chosen = min(order, key=lambda t: _rank_key(t, scores[t]))
    reached = scores[chosen][0]
    if not reached:
        log.warning("no tau reached recall %.3f at L <= %d; chose by best recall", target, max(L_list))
    table = [(t, *scores[t]) for t in order]
    return TauTuning(tau=chosen, table=table, target_reached=reached)
