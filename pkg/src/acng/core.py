"""Vector storage, distances, the shared graph type and on-disk formats."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from acng import _kernels
from acng.errors import DataFormatError, UsageError

GRAPH_MAGIC = b"ACNG"
GRAPH_VERSION = 1


class Metric(enum.Enum):
    EuclideanL2 = "l2"


class Dataset:
    """n x dim float32 matrix; row i is the vector with id i.

    Rows must be finite. With ``unique=True`` (the default for base data) two
    identical rows are rejected, since zero distances break the pruning rules.
    """

    def __init__(self, data, *, unique: bool = True, metric: Metric = Metric.EuclideanL2):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError(f"dataset must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            bad = int(np.argwhere(~np.isfinite(arr))[0, 0])
            raise DataFormatError(f"row {bad} has a non-finite component")
        if unique:
            pair = find_duplicate(arr)
            if pair is not None:
                raise DataFormatError(f"duplicate points: ids {pair[0]} and {pair[1]} coincide")
        arr.setflags(write=False)
        self.data = arr
        self.metric = metric

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i):
        return self.data[i]

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, dim={self.dim})"

    @classmethod
    def from_fvecs(cls, path, *, unique: bool = True) -> "Dataset":
        return cls(read_fvecs(path), unique=unique)


def find_duplicate(arr: np.ndarray):
    """Lowest-id pair of identical rows, or None."""
    if arr.shape[0] < 2:
        return None
    order = np.lexsort(arr.T[::-1])
    s = arr[order]
    same = np.all(s[1:] == s[:-1], axis=1)
    if not same.any():
        return None
    hits = np.flatnonzero(same)
    pairs = sorted(tuple(sorted((int(order[h]), int(order[h + 1])))) for h in hits)
    return pairs[0]


def as_dataset(data, *, unique: bool = True) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(data, unique=unique)


def distance(a, b, metric: Metric = Metric.EuclideanL2) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if metric is not Metric.EuclideanL2:
        raise UsageError(f"unsupported metric {metric}")
    return float(_kernels.l2(a, b))


@dataclass(frozen=True)
class DatasetStats:
    diameter: float
    min_dist: float
    min_pair: tuple[int, int]

    @property
    def aspect_ratio(self) -> float:
        return self.diameter / self.min_dist

    def to_dict(self) -> dict:
        return {
            "diameter": self.diameter,
            "min_dist": self.min_dist,
            "aspect_ratio": self.aspect_ratio,
        }


def compute_stats(data, metric: Metric = Metric.EuclideanL2) -> DatasetStats:
    """Exact diameter and minimum pairwise distance over all n(n-1)/2 pairs."""
    ds = as_dataset(data, unique=False)
    if ds.n < 2:
        raise UsageError("compute_stats needs at least two points")
    if metric is not Metric.EuclideanL2:
        raise UsageError(f"unsupported metric {metric}")
    diam, best, i, j = _kernels.pair_extremes(ds.data)
    if best == 0.0:
        raise DataFormatError(f"duplicate points: ids {i} and {j} coincide")
    return DatasetStats(diameter=float(diam), min_dist=float(best), min_pair=(int(i), int(j)))


class ProximityGraph:
    """Directed graph in CSR form with an entry vertex.

    ``neighbors(u)`` is ordered ascending by distance to u (ties by id).
    """

    def __init__(self, indptr, indices, entry_point: int, max_degree: int | None = None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.n = self.indptr.shape[0] - 1
        degs = np.diff(self.indptr)
        self.max_degree = int(max_degree) if max_degree is not None else int(degs.max(initial=0))
        self.entry_point = int(entry_point)
        if not 0 <= self.entry_point < self.n:
            raise UsageError(f"entry point {entry_point} out of range [0, {self.n})")

    @classmethod
    def from_lists(cls, lists, entry_point: int, max_degree: int | None = None) -> "ProximityGraph":
        indptr = np.zeros(len(lists) + 1, np.int64)
        indptr[1:] = np.cumsum([len(x) for x in lists])
        indices = (
            np.concatenate([np.asarray(x, np.int64) for x in lists])
            if indptr[-1]
            else np.zeros(0, np.int64)
        )
        return cls(indptr, indices, entry_point, max_degree)

    @property
    def starts(self) -> np.ndarray:
        return self.indptr[:-1]

    @property
    def ends(self) -> np.ndarray:
        return self.indptr[1:]

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_lists(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self.n)]

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1])

    def has_edge(self, u: int, v: int) -> bool:
        return bool(np.any(self.neighbors(u) == v))

    def check(self, max_degree: int | None = None) -> None:
        """Raise ValueError on self-loops, duplicate edges, bad ids or degree overflow."""
        cap = self.max_degree if max_degree is None else max_degree
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ValueError("neighbor id out of range")
        for u in range(self.n):
            nb = self.neighbors(u)
            if len(nb) > cap:
                raise ValueError(f"vertex {u} has out-degree {len(nb)} > {cap}")
            if np.any(nb == u):
                raise ValueError(f"self-loop at {u}")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"duplicate out-neighbor at {u}")

    def reachable(self, source: int | None = None) -> np.ndarray:
        """Boolean mask of vertices reachable from ``source`` (default entry point)."""
        return reachable_from(self.indptr, self.indices, self.entry_point if source is None else source)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProximityGraph):
            return NotImplemented
        return (
            self.entry_point == other.entry_point
            and self.max_degree == other.max_degree
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self) -> str:
        return f"ProximityGraph(n={self.n}, edges={self.n_edges}, max_degree={self.max_degree}, entry={self.entry_point})"

    def to_bytes(self) -> bytes:
        head = GRAPH_MAGIC + struct.pack("<IQIQ", GRAPH_VERSION, self.n, self.max_degree, self.entry_point)
        degs = self.degrees()
        body = np.empty(self.n + self.n_edges, dtype="<u4")
        # interleave [deg, ids...] per vertex
        pos = self.indptr[:-1] + np.arange(self.n)
        body[pos] = degs
        mask = np.ones(body.shape[0], bool)
        mask[pos] = False
        body[mask] = self.indices
        return head + body.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ProximityGraph":
        hsize = 4 + struct.calcsize("<IQIQ")
        if len(buf) < hsize or buf[:4] != GRAPH_MAGIC:
            raise DataFormatError("not an ACNG graph file (bad magic)", offset=0)
        version, n, max_degree, entry = struct.unpack_from("<IQIQ", buf, 4)
        if version != GRAPH_VERSION:
            raise DataFormatError(f"unsupported graph format version {version}", offset=4)
        if (len(buf) - hsize) % 4:
            raise DataFormatError("truncated graph body", offset=len(buf))
        body = np.frombuffer(buf, dtype="<u4", offset=hsize)
        if n > body.shape[0]:
            raise DataFormatError(f"header declares {n} vertices but the body is too short", offset=len(buf))
        indptr = np.zeros(n + 1, np.int64)
        lists_pos = np.empty(n, np.int64)
        at = 0
        for u in range(n):
            if at >= body.shape[0]:
                raise DataFormatError(f"truncated graph at vertex {u}", offset=hsize + 4 * at)
            deg = int(body[at])
            lists_pos[u] = at + 1
            at += 1 + deg
            indptr[u + 1] = indptr[u] + deg
        if at != body.shape[0]:
            raise DataFormatError("graph body length does not match degrees", offset=hsize + 4 * min(at, body.shape[0]))
        indices = np.empty(indptr[-1], np.int64)
        for u in range(n):
            indices[indptr[u]:indptr[u + 1]] = body[lists_pos[u]:lists_pos[u] + indptr[u + 1] - indptr[u]]
        if indices.size and indices.max() >= n:
            bad = int(np.argmax(indices >= n))
            u = int(np.searchsorted(indptr, bad, side="right")) - 1
            raise DataFormatError(f"neighbor id {indices[bad]} out of range", offset=hsize + 4 * int(lists_pos[u] + bad - indptr[u]))
        if n and entry >= n:
            raise DataFormatError(f"entry point {entry} out of range", offset=4 + 4 + 8 + 4)
        return cls(indptr, indices, entry, max_degree)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ProximityGraph":
        return cls.from_bytes(Path(path).read_bytes())


def reachable_from(indptr, indices, source: int) -> np.ndarray:
    seen = np.zeros(indptr.shape[0] - 1, np.bool_)
    _kernels.mark_reachable(indptr[:-1], indptr[1:], indices, int(source), seen)
    return seen


def _read_vecs(path, payload_dtype) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError("file too short for a dimension header", offset=0)
    if len(raw) % 4:
        raise DataFormatError("file length is not a multiple of 4 bytes", offset=len(raw) - len(raw) % 4)
    words = np.frombuffer(raw, dtype="<i4")
    dim = int(words[0])
    if dim <= 0:
        raise DataFormatError(f"non-positive dimension {dim}", offset=0)
    rec = dim + 1
    n_full = words.shape[0] // rec
    heads = words[: n_full * rec : rec]
    bad = np.flatnonzero(heads != dim)
    if bad.size:
        r = int(bad[0])
        raise DataFormatError(f"record {r} declares dim {int(heads[r])}, expected {dim}", offset=4 * r * rec)
    if words.shape[0] % rec:
        raise DataFormatError("truncated final record", offset=4 * n_full * rec)
    body = words.reshape(n_full, rec)[:, 1:]
    return np.ascontiguousarray(body.view(payload_dtype).astype(payload_dtype.newbyteorder("=")))


def read_fvecs(path) -> np.ndarray:
    """Read an fvecs file into an (n, dim) float32 array."""
    return _read_vecs(path, np.dtype("<f4"))


def read_ivecs(path) -> np.ndarray:
    return _read_vecs(path, np.dtype("<i4"))


def _write_vecs(path, arr: np.ndarray, dtype: str) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise UsageError("expected a 2-D array")
    n, dim = arr.shape
    out = np.empty((n, dim + 1), dtype="<i4")
    out[:, 0] = dim
    out[:, 1:] = np.ascontiguousarray(arr, dtype=dtype).view("<i4")
    Path(path).write_bytes(out.tobytes())


def write_fvecs(path, arr) -> None:
    _write_vecs(path, arr, "<f4")


def write_ivecs(path, arr) -> None:
    _write_vecs(path, arr, "<i4")
