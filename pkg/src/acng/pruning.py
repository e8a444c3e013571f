"""Edge-pruning rules, the shortcut-set scan and adaptive alpha selection.

Four rules decide whether an already-selected neighbor ``v`` of ``p`` makes
candidate ``u`` redundant, given ``d_pu = d(p, u)`` and ``d_uv = d(u, v)``:

=================  ========================================
rule               u is pruned iff
=================  ========================================
shifted-scaled     d_pu > alpha * d_uv + (alpha + 1) * tau
triangle (MRNG)    d_pu > d_uv
scaled (Vamana)    d_pu > alpha * d_uv
shifted (tau-MG)   d_pu - 3 * tau > d_uv
=================  ========================================

All comparisons are strict, so boundary-equal candidates survive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from acng import _kernels
from acng.core import as_dataset
from acng.errors import UsageError


class RuleKind(enum.IntEnum):
    SHIFTED_SCALED = _kernels.SHIFTED_SCALED
    TRIANGLE = _kernels.TRIANGLE
    SCALED = _kernels.SCALED
    SHIFTED = _kernels.SHIFTED


@dataclass(frozen=True)
class PruneRule:
    kind: RuleKind
    alpha: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        if self.kind in (RuleKind.SHIFTED_SCALED, RuleKind.SCALED) and not self.alpha > 0:
            raise UsageError(f"alpha must be > 0, got {self.alpha}")
        if self.kind in (RuleKind.SHIFTED_SCALED, RuleKind.SHIFTED) and not self.tau >= 0:
            raise UsageError(f"tau must be >= 0, got {self.tau}")

    @classmethod
    def shifted_scaled(cls, alpha: float, tau: float) -> "PruneRule":
        return cls(RuleKind.SHIFTED_SCALED, float(alpha), float(tau))

    @classmethod
    def triangle(cls) -> "PruneRule":
        return cls(RuleKind.TRIANGLE)

    @classmethod
    def scaled(cls, alpha: float) -> "PruneRule":
        return cls(RuleKind.SCALED, float(alpha))

    @classmethod
    def shifted(cls, tau: float) -> "PruneRule":
        return cls(RuleKind.SHIFTED, tau=float(tau))

    def __str__(self) -> str:
        return {
            RuleKind.SHIFTED_SCALED: f"shifted-scaled(alpha={self.alpha}, tau={self.tau})",
            RuleKind.TRIANGLE: "triangle",
            RuleKind.SCALED: f"scaled(alpha={self.alpha})",
            RuleKind.SHIFTED: f"shifted(tau={self.tau})",
        }[self.kind]


@dataclass(frozen=True)
class AdaptiveSchedule:
    """alpha runs alpha0, alpha0 + d_alpha, ... up to alpha_max; at most M neighbors kept."""

    M: int = 70
    alpha0: float = 0.9
    alpha_max: float = 1.6
    d_alpha: float = 0.05

    def __post_init__(self):
        if self.M < 2:
            raise UsageError(f"M must be >= 2, got {self.M}")
        if not self.d_alpha > 0:
            raise UsageError(f"d_alpha must be > 0, got {self.d_alpha}")
        if self.alpha0 > self.alpha_max:
            raise UsageError(f"alpha0 ({self.alpha0}) must not exceed alpha_max ({self.alpha_max})")

    def alphas(self) -> list[float]:
        out = []
        i = 0
        while self.alpha0 + i * self.d_alpha <= self.alpha_max + _kernels.ALPHA_EPS:
            out.append(self.alpha0 + i * self.d_alpha)
            i += 1
        return out


def prunes(rule: PruneRule, d_pu: float, d_uv: float) -> bool:
    """True when a selected neighbor at distance d_uv from u makes u redundant."""
    return bool(_kernels.rule_prunes(int(rule.kind), rule.alpha, rule.tau, float(d_pu), float(d_uv)))


def alpha_bar(d_pu: float, d_uv: float, tau: float) -> float:
    """Largest alpha at which the shifted-scaled rule still prunes: (d_pu - tau) / (d_uv + tau)."""
    return float(_kernels.alpha_bar(float(d_pu), float(d_uv), float(tau)))


@dataclass
class PruneCache:
    """Memo of alpha_bar(u, v) for one owner p.

    ``evaluations`` counts first touches, i.e. how many d(u, v) were needed.
    """

    values: dict = field(default_factory=dict)
    evaluations: int = 0

    def __len__(self) -> int:
        return len(self.values)


def cached_prunes(cache: PruneCache, pair, d_pu: float,
                  d_uv: Union[float, Callable[[], float]], tau: float, alpha: float) -> bool:
    """``alpha_bar(u, v) > alpha`` with alpha_bar memoised per pair.

    ``d_uv`` may be a zero-argument callable; it is only called on the first
    lookup of ``pair``.
    """
    ab = cache.values.get(pair)
    if ab is None:
        duv = d_uv() if callable(d_uv) else d_uv
        ab = alpha_bar(d_pu, duv, tau)
        cache.values[pair] = ab
        cache.evaluations += 1
    return ab > alpha


class Neighbors(NamedTuple):
    """Parallel id / distance arrays, ascending by (distance, id)."""

    ids: np.ndarray
    dists: np.ndarray

    def __len__(self) -> int:
        return self.ids.shape[0]

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.dists.tolist()))


CandidateInput = Union[Neighbors, Sequence[tuple[int, float]], Sequence[int], np.ndarray]


def _with_distances(arr: np.ndarray, p: int, cands: CandidateInput) -> CandidateInput:
    """Bare ids get their distances to p computed; other inputs pass through."""
    if isinstance(cands, Neighbors):
        return cands
    if isinstance(cands, np.ndarray) and cands.ndim == 1 and np.issubdtype(cands.dtype, np.integer):
        ids = cands.astype(np.int64)
    elif len(cands) and all(isinstance(c, (int, np.integer)) for c in cands):
        ids = np.asarray(cands, np.int64)
    else:
        return cands
    if ids.size and (ids.min() < 0 or ids.max() >= arr.shape[0]):
        raise UsageError("candidate id out of range")
    return Neighbors(ids, _kernels.dists_to(arr, p, ids))


def sort_candidates(p: int, cands: CandidateInput) -> Neighbors:
    """Validate candidates of p and order them by (distance, id)."""
    if isinstance(cands, Neighbors) or (isinstance(cands, tuple) and len(cands) == 2
                                        and isinstance(cands[0], np.ndarray)):
        ids = np.asarray(cands[0], np.int64)
        d = np.asarray(cands[1], np.float64)
    elif len(cands) == 0:
        return Neighbors(np.zeros(0, np.int64), np.zeros(0, np.float64))
    else:
        ids = np.fromiter((c[0] for c in cands), np.int64, len(cands))
        d = np.fromiter((c[1] for c in cands), np.float64, len(cands))
    if ids.shape != d.shape:
        raise UsageError("candidate ids and distances differ in length")
    if np.any(ids == p):
        raise UsageError(f"candidate list of {p} contains {p} itself")
    if np.unique(ids).shape[0] != ids.shape[0]:
        raise UsageError(f"candidate list of {p} has duplicate ids")
    s_ids, s_d = _kernels.sort_by_dist_id(ids, d)
    return Neighbors(s_ids, s_d)


@dataclass
class PruneResult:
    neighbors: Neighbors
    n_dist: int = 0
    rounds: int = 1
    exhausted: bool = False

    @property
    def ids(self) -> np.ndarray:
        return self.neighbors.ids

    @property
    def dists(self) -> np.ndarray:
        return self.neighbors.dists


def prune_candidates(data, p: int, cands: CandidateInput, rule: PruneRule,
                     cap: int | None = None) -> PruneResult:
    """Shortcut set of p: scan candidates nearest first, keep u unless a kept v prunes it.

    With ``cap`` the scan stops once that many neighbors are kept.
    """
    ds = as_dataset(data)
    c = sort_candidates(p, _with_distances(ds.data, p, cands))
    pos, ndist = _kernels.prune_scan(
        ds.data, c.ids, c.dists, int(rule.kind), rule.alpha, rule.tau, -1 if cap is None else int(cap)
    )
    return PruneResult(Neighbors(c.ids[pos], c.dists[pos]), n_dist=int(ndist))


def adaptive_prune(data, p: int, cands: CandidateInput, sched: AdaptiveSchedule, tau: float,
                   *, use_cache: bool = True, early_stop: bool = True) -> PruneResult:
    """Raise alpha from ``sched.alpha0`` in ``sched.d_alpha`` steps until the
    shifted-scaled shortcut set holds at least floor(M/2) points or alpha passes
    ``sched.alpha_max``; return the M nearest members of the last set.

    ``use_cache`` memoises alpha_bar(u, v) across rounds so each candidate pair
    costs at most one distance. ``early_stop`` caps every round at M members;
    a capped round always meets the floor(M/2) target, so the result is the
    same as scanning in full. Both switches exist for equivalence testing.
    """
    if tau < 0:
        raise UsageError(f"tau must be >= 0, got {tau}")
    ds = as_dataset(data)
    c = sort_candidates(p, _with_distances(ds.data, p, cands))
    return _adaptive_sorted(ds.data, c, sched, tau, use_cache, early_stop)


def _adaptive_sorted(arr: np.ndarray, c: Neighbors, sched: AdaptiveSchedule, tau: float,
                     use_cache: bool = True, early_stop: bool = True) -> PruneResult:
    pos, ndist, rounds, exhausted = _kernels.adaptive_scan(
        arr, c.ids, c.dists, sched.M, sched.alpha0, sched.alpha_max, sched.d_alpha,
        float(tau), use_cache, early_stop,
    )
    return PruneResult(Neighbors(c.ids[pos], c.dists[pos]), int(ndist), int(rounds), bool(exhausted))
