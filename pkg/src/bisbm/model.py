"""Bipartite two-block model: parameters, labelings, graphs, samplers.

Vertices split into two sides of sizes n1 and n2; each side carries hidden
+-1 labels. A pair (u, v) is joined with probability delta*p when the labels
agree and (2-delta)*p when they differ, independently across pairs. delta=1
is pure noise; delta in {0, 2} are the fully dis-/assortative extremes.

The right side may be astronomically large (n2 up to 1e7 and beyond for
implicit labelings), so nothing here ever allocates length-n2 state: graphs
store only their edges plus the set of active columns, and sampling walks
each row with geometric jumps in O(n2*p) expected work.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .errors import DimensionMismatchError, InvalidParameterError

Seed = int

_GRAPH_MAGIC = "bisbm"


@dataclass(frozen=True)
class ModelParams:
    """Sizes and edge probabilities of one instance."""

    n1: int
    n2: int
    p: float
    delta: float

    def __post_init__(self):
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise InvalidParameterError("n1 and n2 must be integers")
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "delta", float(self.delta))
        if self.n1 < 1 or self.n2 < 1:
            raise InvalidParameterError("sides must have at least one vertex")
        if not 0.0 <= self.p <= 0.5:
            raise InvalidParameterError(f"p={self.p} outside [0, 1/2]")
        if not 0.0 <= self.delta <= 2.0:
            raise InvalidParameterError(f"delta={self.delta} outside [0, 2]")
        # Redundant given p <= 1/2, but these are the real probability bounds.
        if self.delta * self.p > 1.0 or (2.0 - self.delta) * self.p > 1.0:
            raise InvalidParameterError("edge probabilities exceed 1")

    @property
    def p_same(self) -> float:
        return self.delta * self.p

    @property
    def p_diff(self) -> float:
        return (2.0 - self.delta) * self.p


class Labeling:
    """Materialized +-1 labels for one side."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidParameterError("labeling must be a nonempty vector")
        if not np.all(np.isin(arr, (-1, 1))):
            raise InvalidParameterError("labels must be +-1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        self.values = arr

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __neg__(self):
        return Labeling(-self.values)

    def __eq__(self, other):
        if not isinstance(other, (Labeling, HashLabeling)):
            return NotImplemented
        return len(self) == len(other) and bool(
            np.array_equal(self.values, as_labeling(other).values)
        )

    def take(self, indices) -> np.ndarray:
        return self.values[indices]

    @property
    def bias(self) -> float:
        """Empirical mean label; the sides of a finite sample are never
        perfectly balanced and downstream diagnostics want to know by how much."""
        return float(self.values.mean())


class HashLabeling:
    """Implicit +-1 labels: label(i) is a pure hash of (seed, i).

    Stands in for an i.i.d. uniform labeling of a side too large to store.
    """

    __slots__ = ("n", "seed")

    def __init__(self, n: int, seed: Seed):
        if n < 1:
            raise InvalidParameterError("labeling must be nonempty")
        self.n = int(n)
        self.seed = int(seed)

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        if not 0 <= i < self.n:
            raise IndexError(i)
        return int(seeding.hash_signs(self.seed, np.asarray([i]))[0])

    def take(self, indices) -> np.ndarray:
        return seeding.hash_signs(self.seed, np.asarray(indices, dtype=np.int64))

    @property
    def bias(self) -> float:
        total = 0
        for start in range(0, self.n, 1 << 22):
            idx = np.arange(start, min(self.n, start + (1 << 22)), dtype=np.int64)
            total += int(seeding.hash_signs(self.seed, idx).sum())
        return total / self.n

    def materialize(self) -> Labeling:
        if self.n > 100_000_000:
            raise InvalidParameterError("refusing to materialize > 1e8 labels")
        return Labeling(self.take(np.arange(self.n, dtype=np.int64)))


LabelSource = Labeling | HashLabeling


def as_labeling(x, n: int | None = None) -> Labeling:
    """Validation helper: accept a Labeling or any +-1 vector."""
    lab = x if isinstance(x, Labeling) else Labeling(x)
    if n is not None and len(lab) != n:
        raise DimensionMismatchError(f"expected {n} labels, got {len(lab)}")
    return lab


def gen_labeling(n: int, seed: Seed, balanced: bool = False) -> Labeling:
    """I.i.d. uniform labels, or exactly floor(n/2) positive when balanced."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    rng = seeding.generator(seed, "labeling")
    if balanced:
        values = np.full(n, -1, dtype=np.int8)
        values[rng.permutation(n)[: n // 2]] = 1
    else:
        values = (rng.integers(0, 2, size=n, dtype=np.int8) << 1) - 1
    return Labeling(values)


class _ColumnMap(Mapping):
    """Read-only map: active column id -> array of its V1 neighbors."""

    __slots__ = ("_g",)

    def __init__(self, g):
        self._g = g

    def __getitem__(self, v):
        rows = self._g.column_neighbors(v)
        if rows.size == 0:
            raise KeyError(v)
        return rows

    def __iter__(self):
        return iter(self._g.active_column_ids.tolist())

    def __len__(self):
        return self._g.active_column_ids.size


class BipartiteGraph:
    """Simple bipartite graph plus the parameters it was drawn from.

    Edges are kept as parallel (u, v) arrays sorted by u then v, with no
    duplicates. Column-side structure covers active columns only.
    """

    def __init__(self, params: ModelParams, edge_u, edge_v, *, validate: bool = True):
        self.params = params
        u = np.asarray(edge_u, dtype=np.int64)
        v = np.asarray(edge_v, dtype=np.int64)
        if u.shape != v.shape or u.ndim != 1:
            raise DimensionMismatchError("edge arrays must be equal-length vectors")
        if validate and u.size:
            if u.min() < 0 or u.max() >= params.n1:
                raise InvalidParameterError("edge endpoint outside [0, n1)")
            if v.min() < 0 or v.max() >= params.n2:
                raise InvalidParameterError("edge endpoint outside [0, n2)")
            if not _is_sorted_unique(u, v):
                raise InvalidParameterError("edges must be sorted by (u, v) and unique")
        u.setflags(write=False)
        v.setflags(write=False)
        self.edge_u = u
        self.edge_v = v
        counts = np.bincount(u, minlength=params.n1) if u.size else np.zeros(params.n1, dtype=np.int64)
        self._row_offsets = np.concatenate(([0], np.cumsum(counts)))
        self.active_column_ids, col_counts = np.unique(v, return_counts=True)
        order = np.lexsort((u, v))
        self._col_rows = u[order]
        self._col_offsets = np.concatenate(([0], np.cumsum(col_counts)))
        self._row_degrees = counts.astype(np.int64)
        self._csr_cache = None
        self._csr_t_cache = None

    @classmethod
    def from_edges(cls, params: ModelParams, pairs) -> "BipartiteGraph":
        """Build from an iterable of (u, v) pairs in any order; sorts and checks."""
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
        if arr.size == 0:
            return cls(params, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DimensionMismatchError("pairs must be (m, 2)")
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        return cls(params, arr[order, 0], arr[order, 1])

    @classmethod
    def from_biadjacency(cls, mat, params: ModelParams | None = None) -> "BipartiteGraph":
        """Build from a dense or scipy-sparse 0/1 biadjacency matrix.

        When params are not supplied a metadata-only placeholder is attached
        (density clamped into [0, 1/2], delta = 1); it does not assert how
        the matrix was generated.
        """
        import scipy.sparse as sp

        if sp.issparse(mat):
            coo = mat.tocoo()
            n1, n2 = coo.shape
            keep = coo.data != 0
            u, v = coo.row[keep].astype(np.int64), coo.col[keep].astype(np.int64)
        else:
            arr = np.asarray(mat)
            if arr.ndim != 2:
                raise DimensionMismatchError("biadjacency must be a matrix")
            n1, n2 = arr.shape
            u, v = np.nonzero(arr)
            u, v = u.astype(np.int64), v.astype(np.int64)
        if params is None:
            density = u.size / max(1, n1 * n2)
            params = ModelParams(n1, n2, min(0.5, density), 1.0)
        elif (params.n1, params.n2) != (n1, n2):
            raise DimensionMismatchError("params disagree with matrix shape")
        order = np.lexsort((v, u))
        return cls(params, u[order], v[order])

    @property
    def n_edges(self) -> int:
        return self.edge_u.size

    def row_adjacency(self, u: int) -> np.ndarray:
        return self.edge_v[self._row_offsets[u] : self._row_offsets[u + 1]]

    def column_neighbors(self, v: int) -> np.ndarray:
        i = np.searchsorted(self.active_column_ids, v)
        if i == self.active_column_ids.size or self.active_column_ids[i] != v:
            return np.empty(0, dtype=np.int64)
        return self._col_rows[self._col_offsets[i] : self._col_offsets[i + 1]]

    @property
    def active_columns(self) -> Mapping:
        return _ColumnMap(self)

    @property
    def row_degrees(self) -> np.ndarray:
        return self._row_degrees

    @property
    def column_degrees(self) -> np.ndarray:
        """Degrees of active columns, aligned with active_column_ids."""
        return np.diff(self._col_offsets)

    def biadjacency_csr(self):
        """Biadjacency over active columns as scipy CSR (cached)."""
        if self._csr_cache is None:
            import scipy.sparse as sp

            compact = np.searchsorted(self.active_column_ids, self.edge_v)
            self._csr_cache = sp.csr_matrix(
                (np.ones(self.n_edges), (self.edge_u, compact)),
                shape=(self.params.n1, self.active_column_ids.size),
            )
        return self._csr_cache

    def biadjacency_csr_t(self):
        if self._csr_t_cache is None:
            self._csr_t_cache = self.biadjacency_csr().T.tocsr()
        return self._csr_t_cache

    def to_dense(self) -> np.ndarray:
        """Full n1 x n2 0/1 matrix; oracle-scale instances only."""
        if self.params.n1 * self.params.n2 > 10_000_000:
            raise InvalidParameterError("dense form refused above 1e7 entries")
        out = np.zeros((self.params.n1, self.params.n2))
        out[self.edge_u, self.edge_v] = 1.0
        return out


def _is_sorted_unique(u: np.ndarray, v: np.ndarray) -> bool:
    if u.size < 2:
        return True
    du = np.diff(u)
    if np.any(du < 0):
        return False
    same_u = du == 0
    return bool(np.all(np.diff(v)[same_u] > 0))


def _bernoulli_positions(rng: np.random.Generator, n: int, q: float) -> np.ndarray:
    """Indices in [0, n) hit by i.i.d. Bernoulli(q), via geometric jumps.

    Expected O(n*q) work; never touches the untaken positions.
    """
    if q <= 0.0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(n, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        expect = (n - pos) * q
        size = int(expect + 10.0 * np.sqrt(expect + 1.0)) + 16
        pts = pos + np.cumsum(rng.geometric(q, size=size).astype(np.int64))
        cut = int(np.searchsorted(pts, n, side="left"))
        if cut < size:
            chunks.append(pts[:cut])
            break
        chunks.append(pts)
        pos = int(pts[-1])
    return chunks[0] if len(chunks) == 1 else np.concatenate(chunks)


def gen_bipartite_sbm(
    params: ModelParams, sigma, tau, seed: Seed
) -> BipartiteGraph:
    """Sample one graph given both labelings.

    Each row u runs on its own counter-based stream keyed by (seed, u), so
    rows are reproducible independently and in parallel. Candidates are
    drawn by geometric jumps at the larger of the two rates and thinned per
    candidate by the actual rate for its label class; tau may therefore be
    implicit (HashLabeling) with no length-n2 storage anywhere.
    """
    sig = sigma if isinstance(sigma, (Labeling, HashLabeling)) else Labeling(sigma)
    if len(sig) != params.n1:
        raise DimensionMismatchError(f"sigma has {len(sig)} labels, n1={params.n1}")
    if not isinstance(tau, (Labeling, HashLabeling)):
        tau = Labeling(tau)
    if len(tau) != params.n2:
        raise DimensionMismatchError(f"tau has {len(tau)} labels, n2={params.n2}")
    p_same, p_diff = params.p_same, params.p_diff
    q = max(p_same, p_diff)
    sig_vals = sig.take(np.arange(params.n1)) if isinstance(sig, HashLabeling) else sig.values
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    for u in range(params.n1):
        rng = seeding.generator(seed, "edges", u)
        cand = _bernoulli_positions(rng, params.n2, q)
        if cand.size == 0:
            continue
        rates = np.where(tau.take(cand) == sig_vals[u], p_same, p_diff)
        kept = cand[rng.random(cand.size) * q < rates]
        if kept.size:
            us.append(np.full(kept.size, u, dtype=np.int64))
            vs.append(kept)
    if us:
        edge_u = np.concatenate(us)
        edge_v = np.concatenate(vs)
    else:
        edge_u = np.empty(0, dtype=np.int64)
        edge_v = np.empty(0, dtype=np.int64)
    return BipartiteGraph(params, edge_u, edge_v, validate=False)


def graph_degrees(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """(row degrees over all of V1, column degrees over active columns)."""
    return g.row_degrees.copy(), g.column_degrees.copy()


def save_graph(g: BipartiteGraph, path) -> None:
    """Text form: header `bisbm n1 n2 p delta`, then one `u v` line per edge
    ascending by u then v. Floats use repr so the round trip is bit exact."""
    lines = [f"{_GRAPH_MAGIC} {g.params.n1} {g.params.n2} {g.params.p!r} {g.params.delta!r}"]
    lines.extend(f"{u} {v}" for u, v in zip(g.edge_u.tolist(), g.edge_v.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> BipartiteGraph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != _GRAPH_MAGIC:
            raise InvalidParameterError(f"not a {_GRAPH_MAGIC} graph file: {path}")
        params = ModelParams(int(header[1]), int(header[2]), float(header[3]), float(header[4]))
        tokens = fh.read().split()
    flat = np.array(tokens, dtype=np.int64) if tokens else np.empty(0, dtype=np.int64)
    if flat.size == 0:
        return BipartiteGraph(params, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    if flat.size % 2:
        raise InvalidParameterError(f"malformed edge line in {path}")
    pairs = flat.reshape(-1, 2)
    return BipartiteGraph(params, pairs[:, 0], pairs[:, 1])


def save_labeling(lab, path) -> None:
    lab = as_labeling(lab)
    Path(path).write_text("\n".join(str(int(x)) for x in lab.values) + "\n")


def load_labeling(path) -> Labeling:
    values = np.loadtxt(path, dtype=np.int64, ndmin=1)
    return Labeling(values)
