"""Compiled inner loops.

Everything here is ``nogil`` so callers can fan work out over a thread pool.
Vectors are stored as float32; every distance is accumulated in float64.
Adjacency is passed as ``(starts, ends, indices)``: the out-neighbors of u are
``indices[starts[u]:ends[u]]``. CSR graphs pass ``indptr[:-1], indptr[1:]``;
padded (n, width) tables pass row offsets and row offsets + degree.
"""

import numba
import numpy as np

# Rule codes shared with acng.pruning.RuleKind.
SHIFTED_SCALED = 0
TRIANGLE = 1
SCALED = 2
SHIFTED = 3

# Slack on the alpha ceiling so 0.9 + 14 * 0.05 still counts as <= 1.6.
ALPHA_EPS = 1e-9


# Reassociation lets LLVM vectorise the sum; the order is fixed at compile
# time, so results stay deterministic and l2(a, b) == l2(b, a).
_FAST = {"reassoc", "nsz", "contract"}


@numba.njit(nogil=True, cache=True, fastmath=_FAST)
def l2(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        t = np.float64(a[i]) - np.float64(b[i])
        s += t * t
    return np.sqrt(s)


@numba.njit(nogil=True, cache=True, inline="always")
def key_less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@numba.njit(nogil=True, cache=True)
def dists_to(data, p, ids):
    out = np.empty(ids.shape[0], np.float64)
    for j in range(ids.shape[0]):
        out[j] = l2(data[p], data[ids[j]])
    return out


@numba.njit(nogil=True, cache=True)
def dists_to_vec(data, query, ids):
    out = np.empty(ids.shape[0], np.float64)
    for j in range(ids.shape[0]):
        out[j] = l2(data[ids[j]], query)
    return out


@numba.njit(nogil=True, cache=True)
def sort_by_dist_id(ids, d):
    """Return (ids, d) reordered ascending by (distance, id)."""
    by_id = np.argsort(ids, kind="mergesort")
    ids1 = ids[by_id]
    d1 = d[by_id]
    order = np.argsort(d1, kind="mergesort")
    return ids1[order], d1[order]


@numba.njit(nogil=True, cache=True, inline="always")
def rule_prunes(kind, alpha, tau, d_pu, d_uv):
    if kind == SHIFTED_SCALED:
        return d_pu > alpha * d_uv + (alpha + 1.0) * tau
    elif kind == TRIANGLE:
        return d_pu > d_uv
    elif kind == SCALED:
        return d_pu > alpha * d_uv
    else:
        return d_pu - 3.0 * tau > d_uv


@numba.njit(nogil=True, cache=True, inline="always")
def alpha_bar(d_pu, d_uv, tau):
    num = d_pu - tau
    den = d_uv + tau
    if den > 0.0:
        return num / den
    if num > 0.0:
        return np.inf
    return -np.inf


@numba.njit(nogil=True, cache=True)
def prune_scan(data, ids, d_pu, kind, alpha, tau, cap):
    """Single pruning pass over candidates already sorted by (distance, id).

    Returns positions (into ``ids``) of the shortcut set in insertion order and
    the number of candidate-to-candidate distances evaluated. ``cap < 0`` means
    no early termination.
    """
    c = ids.shape[0]
    members = np.empty(c, np.int64)
    size = 0
    ndist = 0
    for i in range(c):
        if cap >= 0 and size >= cap:
            break
        u = ids[i]
        pruned = False
        for m in range(size):
            v = ids[members[m]]
            d_uv = l2(data[u], data[v])
            ndist += 1
            if rule_prunes(kind, alpha, tau, d_pu[i], d_uv):
                pruned = True
                break
        if not pruned:
            members[size] = i
            size += 1
    return members[:size], ndist


@numba.njit(nogil=True, cache=True)
def adaptive_scan(data, ids, d_pu, m_max, alpha0, alpha_max, d_alpha, tau,
                  use_cache, early_stop):
    """Adaptive alpha loop over candidates sorted by (distance, id).

    The memo ``table[slot, i]`` holds alpha_bar(u_i, v) for the candidate v that
    owns ``slot``; slots are handed out the first time a candidate enters S, and
    a slot row is NaN-initialised only from that candidate's position onward.

    Returns (positions of the final S truncated to m_max, distance evaluations,
    rounds run, exhausted flag).
    """
    c = ids.shape[0]
    half = m_max // 2
    members = np.empty(c, np.int64)
    slot_of = np.full(c, -1, np.int64)
    table = np.empty((c, c), np.float64) if use_cache else np.empty((1, 1), np.float64)
    nslots = 0
    size = 0
    ndist = 0
    rounds = 0
    while size < half and alpha0 + rounds * d_alpha <= alpha_max + ALPHA_EPS:
        alpha = alpha0 + rounds * d_alpha
        rounds += 1
        size = 0
        for i in range(c):
            if early_stop and size >= m_max:
                break
            pruned = False
            for m in range(size):
                j = members[m]
                if use_cache:
                    sl = slot_of[j]
                    if sl < 0:
                        sl = nslots
                        nslots += 1
                        slot_of[j] = sl
                        for t in range(j + 1, c):
                            table[sl, t] = np.nan
                    ab = table[sl, i]
                    if np.isnan(ab):
                        ab = alpha_bar(d_pu[i], l2(data[ids[i]], data[ids[j]]), tau)
                        ndist += 1
                        table[sl, i] = ab
                else:
                    ab = alpha_bar(d_pu[i], l2(data[ids[i]], data[ids[j]]), tau)
                    ndist += 1
                if ab > alpha:
                    pruned = True
                    break
            if not pruned:
                members[size] = i
                size += 1
    exhausted = size < half
    keep = size if size < m_max else m_max
    return members[:keep], ndist, rounds, exhausted


@numba.njit(nogil=True, cache=True)
def exact_row(data, p, kind, alpha, tau):
    """Shortcut set of p over every other point (no cap)."""
    n = data.shape[0]
    ids = np.empty(n - 1, np.int64)
    d = np.empty(n - 1, np.float64)
    k = 0
    for v in range(n):
        if v != p:
            ids[k] = v
            d[k] = l2(data[p], data[v])
            k += 1
    order = np.argsort(d, kind="mergesort")
    ids = ids[order]
    d = d[order]
    pos, ndist = prune_scan(data, ids, d, kind, alpha, tau, -1)
    return ids[pos], d[pos], ndist + (n - 1)


@numba.njit(nogil=True, cache=True)
def beam_search(data, starts, ends, indices, query, entry, L, collect):
    """Instrumented beam search.

    Q is kept sorted by (distance, id) with an explored flag per slot. Every
    vertex has its distance to the query evaluated at most once.

    Returns (queue ids, queue dists, ndc, hops, path, visited ids, visited dists);
    the visited arrays are empty unless ``collect``.
    """
    n = data.shape[0]
    seen = np.zeros(n, np.bool_)
    q_id = np.empty(L + 1, np.int64)
    q_d = np.empty(L + 1, np.float64)
    q_ex = np.zeros(L + 1, np.bool_)
    path = np.empty(n, np.int64)
    vis_id = np.empty(n if collect else 0, np.int64)
    vis_d = np.empty(n if collect else 0, np.float64)
    nvis = 0

    d0 = l2(data[entry], query)
    seen[entry] = True
    ndc = 1
    if collect:
        vis_id[0] = entry
        vis_d[0] = d0
        nvis = 1
    q_id[0] = entry
    q_d[0] = d0
    q_ex[0] = False
    nq = 1
    hops = 0
    while True:
        i = 0
        while i < nq and q_ex[i]:
            i += 1
        if i == nq:
            break
        u = q_id[i]
        q_ex[i] = True
        path[hops] = u
        hops += 1
        for e in range(starts[u], ends[u]):
            v = indices[e]
            if seen[v]:
                continue
            seen[v] = True
            d = l2(data[v], query)
            ndc += 1
            if collect:
                vis_id[nvis] = v
                vis_d[nvis] = d
                nvis += 1
            if nq == L and not key_less(d, v, q_d[nq - 1], q_id[nq - 1]):
                continue
            pos = nq
            while pos > 0 and key_less(d, v, q_d[pos - 1], q_id[pos - 1]):
                pos -= 1
            last = nq if nq < L else L - 1
            for t in range(last, pos, -1):
                q_id[t] = q_id[t - 1]
                q_d[t] = q_d[t - 1]
                q_ex[t] = q_ex[t - 1]
            q_id[pos] = v
            q_d[pos] = d
            q_ex[pos] = False
            if nq < L:
                nq += 1
    return q_id[:nq], q_d[:nq], ndc, hops, path[:hops], vis_id[:nvis], vis_d[:nvis]


@numba.njit(nogil=True, cache=True)
def batch_search(data, starts, ends, indices, queries, entry, L, k, lo, hi, out_ids, out_ndc, out_hops):
    for qi in range(lo, hi):
        ids, _, ndc, hops, _, _, _ = beam_search(
            data, starts, ends, indices, queries[qi], entry, L, False
        )
        kk = min(k, ids.shape[0])
        for j in range(kk):
            out_ids[qi, j] = ids[j]
        for j in range(kk, k):
            out_ids[qi, j] = -1
        out_ndc[qi] = ndc
        out_hops[qi] = hops


@numba.njit(nogil=True, cache=True)
def nn_descent_round(data, nbr, nd, rev_indptr, rev_indices, fwd_keep, rev_keep,
                     lo, hi, new_nbr, new_nd):
    """One pull-style refinement round for vertices [lo, hi).

    Proposals are drawn from the previous round's lists only, so the result of
    a round does not depend on how vertices are split across workers.
    Returns (entries changed, distances evaluated).
    """
    n, K = nbr.shape
    stamp = np.full(n, -1, np.int64)
    changed = 0
    ndist = 0
    buf_id = np.empty(4 * K * K + 2 * K + 16, np.int64)
    for v in range(lo, hi):
        stamp[v] = v
        for a in range(K):
            stamp[nbr[v, a]] = v
        nc = 0
        for a in range(K):
            if not fwd_keep[v, a]:
                continue
            u = nbr[v, a]
            for b in range(K):
                w = nbr[u, b]
                if stamp[w] != v:
                    stamp[w] = v
                    if nc == buf_id.shape[0]:
                        buf_id = np.concatenate((buf_id, np.empty(buf_id.shape[0], np.int64)))
                    buf_id[nc] = w
                    nc += 1
        for e in range(rev_indptr[v], rev_indptr[v + 1]):
            if not rev_keep[e]:
                continue
            r = rev_indices[e]
            for t in range(-1, K):
                w = r if t < 0 else nbr[r, t]
                if stamp[w] != v:
                    stamp[w] = v
                    if nc == buf_id.shape[0]:
                        buf_id = np.concatenate((buf_id, np.empty(buf_id.shape[0], np.int64)))
                    buf_id[nc] = w
                    nc += 1
        all_id = np.empty(K + nc, np.int64)
        all_d = np.empty(K + nc, np.float64)
        for a in range(K):
            all_id[a] = nbr[v, a]
            all_d[a] = nd[v, a]
        for j in range(nc):
            w = buf_id[j]
            all_id[K + j] = w
            all_d[K + j] = l2(data[v], data[w])
        ndist += nc
        s_id, s_d = sort_by_dist_id(all_id, all_d)
        for a in range(K):
            new_nbr[v, a] = s_id[a]
            new_nd[v, a] = s_d[a]
        for a in range(K):
            w = s_id[a]
            found = False
            for b in range(K):
                if nbr[v, b] == w:
                    found = True
                    break
            if not found:
                changed += 1
    return changed, ndist


@numba.njit(nogil=True, cache=True)
def pair_extremes(data):
    """(max distance, min distance, i, j) over all pairs i < j; (i, j) attains the min."""
    n = data.shape[0]
    hi = 0.0
    lo = np.inf
    bi = 0
    bj = 1
    for i in range(n):
        for j in range(i + 1, n):
            d = l2(data[i], data[j])
            if d > hi:
                hi = d
            if d < lo:
                lo = d
                bi = i
                bj = j
    return hi, lo, bi, bj


@numba.njit(nogil=True, cache=True)
def pairwise(data):
    n = data.shape[0]
    out = np.zeros((n, n), np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = l2(data[i], data[j])
            out[i, j] = d
            out[j, i] = d
    return out


@numba.njit(nogil=True, cache=True)
def mutual_exclusion(data, indptr, indices, kind, alpha, tau, rel_tol):
    """(p, u, v) for retained neighbors u nearer than v where u still prunes v."""
    found = []
    for p in range(indptr.shape[0] - 1):
        lo = indptr[p]
        hi = indptr[p + 1]
        for a in range(lo, hi):
            u = indices[a]
            d_pu = l2(data[p], data[u])
            for b in range(lo, hi):
                if a == b:
                    continue
                v = indices[b]
                d_pv = l2(data[p], data[v])
                if not key_less(d_pu, u, d_pv, v):
                    continue
                d_uv = l2(data[u], data[v])
                if kind == SHIFTED_SCALED:
                    rhs = alpha * d_uv + (alpha + 1.0) * tau
                elif kind == SCALED:
                    rhs = alpha * d_uv
                elif kind == TRIANGLE:
                    rhs = d_uv
                else:
                    rhs = d_uv + 3.0 * tau
                if d_pv > rhs * (1.0 + rel_tol):
                    found.append((p, u, v))
    out = np.empty((len(found), 3), np.int64)
    for i in range(len(found)):
        out[i, 0] = found[i][0]
        out[i, 1] = found[i][1]
        out[i, 2] = found[i][2]
    return out


@numba.njit(nogil=True, cache=True)
def mark_reachable(starts, ends, indices, source, seen):
    """Depth-first marking from ``source`` into ``seen``; already-marked vertices are not expanded."""
    if seen[source]:
        return 0
    stack = np.empty(seen.shape[0], np.int64)
    stack[0] = source
    seen[source] = True
    top = 1
    count = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for e in range(starts[u], ends[u]):
            v = indices[e]
            if not seen[v]:
                seen[v] = True
                stack[top] = v
                top += 1
                count += 1
    return count
