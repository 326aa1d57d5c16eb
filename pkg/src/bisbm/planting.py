"""Planted constraint satisfaction: hypergraphs, Fourier structure, reduction.

A planting function Q weights each +-1 pattern of a k-tuple's labels;
hyperedges appear with probability 2^k p Q(labels), so the planted
structure hides in which patterns are favored. The Fourier spectrum of Q
decides everything downstream: the smallest nonempty set S with
Q_hat(S) != 0 (the distribution complexity r) is where the signal lives,
and projecting hyperedges onto S followed by a random 1/(r-1) split lands
exactly on the bipartite block model with delta' = 1 + 2^k Q_hat(S).

Pattern/mask convention used everywhere here: bit i of an integer mask is
set iff x_i = -1, so mask 0 is the all-(+1) pattern. Fourier coefficients
are indexed the same way: bit i of the subset mask means i is in S.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Optional

import numpy as np

from . import seeding
from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    NoSignalError,
    SizeGuardError,
)
from .model import BipartiteGraph, Labeling, ModelParams, as_labeling

_MASS_TOL = 1e-12
_COEF_TOL = 1e-12
_INDEX_GUARD = 1 << 62


def pattern_index(pattern) -> int:
    """Mask of a +-1 pattern: bit i set iff pattern[i] = -1."""
    idx = 0
    for i, x in enumerate(pattern):
        if x == -1:
            idx |= 1 << i
        elif x != 1:
            raise InvalidParameterError(f"pattern entries must be +-1, got {x!r}")
    return idx


def index_pattern(idx: int, k: int) -> np.ndarray:
    """Inverse of pattern_index, as an int8 array of +-1."""
    bits = (idx >> np.arange(k)) & 1
    return (1 - 2 * bits).astype(np.int8)


class PlantingFunction:
    """Probability mass on the 2^k label patterns of a k-tuple.

    Accepts either a full array of 2^k masses in mask order or a mapping
    from +-1 tuples to masses. Masses must be nonnegative and sum to 1
    within 1e-12.
    """

    def __init__(self, k: int, table) -> None:
        if not isinstance(k, int) or k < 1:
            raise InvalidParameterError(f"arity k must be a positive int, got {k!r}")
        size = 1 << k
        if isinstance(table, dict):
            arr = np.zeros(size)
            seen = set()
            for pattern, mass in table.items():
                if len(pattern) != k:
                    raise DimensionMismatchError(f"pattern {pattern!r} is not length {k}")
                idx = pattern_index(pattern)
                if idx in seen:
                    raise InvalidParameterError(f"pattern {pattern!r} listed twice")
                seen.add(idx)
                arr[idx] = mass
        else:
            arr = np.asarray(table, dtype=np.float64)
            if arr.shape != (size,):
                raise DimensionMismatchError(
                    f"table must have 2^k = {size} entries, got shape {arr.shape}"
                )
            arr = arr.copy()
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise InvalidParameterError("masses must be finite and >= 0")
        if abs(float(arr.sum()) - 1.0) > _MASS_TOL:
            raise InvalidParameterError(f"masses sum to {arr.sum()!r}, not 1")
        arr.setflags(write=False)
        self.k = k
        self.table = arr

    def mass(self, pattern) -> float:
        return float(self.table[pattern_index(pattern)])

    @property
    def max_mass(self) -> float:
        return float(self.table.max())


def parity_family(k: int, delta: float) -> PlantingFunction:
    """Q(x) = 2^-k (1 + (delta-1) prod x_i); needs delta in [0, 2]."""
    if not 0.0 <= delta <= 2.0:
        raise InvalidParameterError(f"delta must be in [0, 2], got {delta!r}")
    masks = np.arange(1 << k)
    parity = 1 - 2 * (_popcount(masks) & 1)
    return PlantingFunction(k, 2.0**-k * (1.0 + (delta - 1.0) * parity))


def _popcount(masks: np.ndarray) -> np.ndarray:
    out = np.zeros_like(masks)
    work = masks.copy()
    while np.any(work):
        out += work & 1
        work >>= 1
    return out


@dataclasses.dataclass(frozen=True)
class FourierReport:
    """Fourier spectrum of a planting function.

    coefficients maps each subset of positions (frozenset of 0-based
    indices) to Q_hat(S) = 2^-k sum_x Q(x) prod_{i in S} x_i. The empty
    set always carries 2^-k. distribution_complexity is the smallest
    nonempty |S| with a coefficient above 1e-12 in magnitude, and
    argmin_sets lists every S attaining it.
    """

    k: int
    coefficients: dict
    distribution_complexity: int
    argmin_sets: tuple

    def coefficient(self, s) -> float:
        return self.coefficients[frozenset(s)]


def _walsh_hadamard(values: np.ndarray, k: int) -> np.ndarray:
    arr = values.astype(np.float64).reshape([2] * k)
    for axis in range(k):
        plus = np.take(arr, 0, axis=axis)
        minus = np.take(arr, 1, axis=axis)
        arr = np.stack([plus + minus, plus - minus], axis=axis)
    return arr.reshape(-1)


def fourier(q: PlantingFunction) -> FourierReport:
    """Fourier spectrum, distribution complexity, and its minimizers.

    Raises NoSignalError when every nonempty-set coefficient vanishes,
    i.e. Q is the uniform distribution and there is nothing planted.
    """
    k = q.k
    coeffs = 2.0**-k * _walsh_hadamard(q.table, k)
    masks = np.arange(1 << k)
    sizes = _popcount(masks)
    alive = (np.abs(coeffs) > _COEF_TOL) & (masks > 0)
    if not np.any(alive):
        raise NoSignalError("distribution is uniform; no planted structure")
    r = int(sizes[alive].min())
    argmin = tuple(
        frozenset(int(i) for i in range(k) if m & (1 << i))
        for m in masks[alive & (sizes == r)]
    )
    table = {
        frozenset(int(i) for i in range(k) if m & (1 << i)): float(coeffs[m])
        for m in masks
    }
    return FourierReport(k=k, coefficients=table, distribution_complexity=r, argmin_sets=argmin)


@dataclasses.dataclass(frozen=True)
class PlantedHypergraph:
    """Ordered k-uniform hyperedges over n vertices, with optional labels.

    hyperedges is an (m, k) int64 array; repeated vertices within a tuple
    are legal (tuples live in [n]^k). labels, present only in predicate
    mode, holds one 0/1 per hyperedge. sigma is the planted labeling when
    known; files do not carry it.
    """

    n: int
    k: int
    sigma: Optional[Labeling]
    hyperedges: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        edges = np.asarray(self.hyperedges, dtype=np.int64)
        if edges.ndim != 2 or edges.shape[1] != self.k:
            raise DimensionMismatchError(f"hyperedges must be (m, {self.k})")
        if self.n < 1:
            raise InvalidParameterError("n must be >= 1")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise InvalidParameterError("hyperedge entries must lie in [0, n)")
        edges.setflags(write=False)
        object.__setattr__(self, "hyperedges", edges)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int8)
            if lab.shape != (edges.shape[0],):
                raise DimensionMismatchError("labels must align with hyperedges")
            if lab.size and not np.all((lab == 0) | (lab == 1)):
                raise InvalidParameterError("labels must be 0/1")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)
        if self.sigma is not None:
            object.__setattr__(self, "sigma", as_labeling(self.sigma, self.n))

    @property
    def n_edges(self) -> int:
        return int(self.hyperedges.shape[0])


def _uniform_distinct(rng: np.random.Generator, total: int, m: int) -> np.ndarray:
    """Exact uniform m-subset of range(total), sorted.

    Small universes use numpy's without-replacement choice; large ones
    take the first m distinct values of an i.i.d. uniform stream, which
    induces the uniform subset law without materializing the universe.
    """
    if m > total:
        raise InvalidParameterError("cannot draw more distinct tuples than exist")
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if total <= (1 << 20):
        return np.sort(rng.choice(total, size=m, replace=False).astype(np.int64))
    if m > total // 2:
        raise SizeGuardError(f"drawing {m} of {total} tuples is out of desk scale")
    seen = np.empty(0, dtype=np.int64)
    while seen.size < m:
        short = m - seen.size
        batch = rng.integers(0, total, size=short + short // 8 + 16, dtype=np.int64)
        both = np.concatenate([seen, batch])
        _, first = np.unique(both, return_index=True)
        seen = both[np.sort(first)]  # keep global encounter order
    return np.sort(seen[:m])


def gen_planted_hypergraph(
    n: int, q: PlantingFunction, p: float, seed: int, sigma=None
) -> PlantedHypergraph:
    """Every ordered k-tuple appears independently with prob 2^k p Q(sigma(e)).

    sigma defaults to a fresh uniform labeling derived from the seed.
    Exactness: tuples are grouped by label pattern; within a pattern every
    tuple has the same inclusion probability, so the edge count is the
    matching binomial and the included set is a uniform subset of the
    pattern class. Requires max_x Q(x) 2^k p <= 1 for the rates to be
    probabilities.
    """
    k = q.k
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must be in [0, 1], got {p!r}")
    if q.max_mass * (1 << k) * p > 1.0 + 1e-12:
        raise InvalidParameterError(
            f"max_x Q(x) 2^k p = {q.max_mass * (1 << k) * p!r} exceeds 1"
        )
    if sigma is None:
        sigma = Labeling(seeding.hash_signs(seeding.mix_seed(seed, "planted-sigma"), np.arange(n)))
    else:
        sigma = as_labeling(sigma, n)
    classes = (np.flatnonzero(sigma.values == 1), np.flatnonzero(sigma.values == -1))
    sizes = (classes[0].size, classes[1].size)
    blocks = []
    for mask in range(1 << k):
        rate = q.table[mask] * (1 << k) * p
        bits = [(mask >> i) & 1 for i in range(k)]
        count = 1
        for b in bits:
            count *= sizes[b]
        if count == 0 or rate == 0.0:
            continue
        if count > _INDEX_GUARD:
            raise SizeGuardError(f"pattern class of size {count} exceeds the index guard")
        rng = seeding.generator(seed, "planted-edges", mask)
        m_edges = int(rng.binomial(count, min(rate, 1.0)))
        idx = _uniform_distinct(rng, count, m_edges)
        # decode mixed-radix indices into per-position class members,
        # least significant digit = position 0
        tuples = np.empty((m_edges, k), dtype=np.int64)
        rem = idx
        for pos in range(k):
            base = sizes[bits[pos]]
            tuples[:, pos] = classes[bits[pos]][rem % base]
            rem = rem // base
        blocks.append(tuples)
    edges = np.concatenate(blocks, axis=0) if blocks else np.empty((0, k), dtype=np.int64)
    return PlantedHypergraph(n=n, k=k, sigma=sigma, hyperedges=edges)


def _predicate_table(k: int, predicate) -> np.ndarray:
    if callable(predicate):
        table = np.array(
            [int(predicate(tuple(index_pattern(m, k)))) for m in range(1 << k)],
            dtype=np.int8,
        )
    else:
        table = np.asarray(predicate, dtype=np.int8)
        if table.shape != (1 << k,):
            raise DimensionMismatchError(f"predicate table must have 2^k = {1 << k} entries")
    if not np.all((table == 0) | (table == 1)):
        raise InvalidParameterError("predicate values must be 0/1")
    return table


def gen_goldreich(
    n: int, k: int, predicate, m: int, seed: int, sigma=None
) -> PlantedHypergraph:
    """m uniform ordered k-tuples, each labeled by the predicate on sigma.

    predicate is a callable on +-1 tuples or a 0/1 table of length 2^k in
    mask order. Tuples are drawn independently, so repeats across (and
    within) tuples are possible.
    """
    if m < 0:
        raise InvalidParameterError("m must be >= 0")
    table = _predicate_table(k, predicate)
    if sigma is None:
        sigma = Labeling(seeding.hash_signs(seeding.mix_seed(seed, "goldreich-sigma"), np.arange(n)))
    else:
        sigma = as_labeling(sigma, n)
    rng = seeding.generator(seed, "goldreich-edges")
    tuples = rng.integers(0, n, size=(m, k), dtype=np.int64)
    neg = (sigma.take(tuples) == -1).astype(np.int64)
    masks = neg @ (1 << np.arange(k, dtype=np.int64))
    labels = table[masks]
    return PlantedHypergraph(n=n, k=k, sigma=sigma, hyperedges=tuples, labels=labels)


def filter_positive(h: PlantedHypergraph) -> PlantedHypergraph:
    """Keep only 1-labeled hyperedges; the result carries no labels."""
    if h.labels is None:
        raise InvalidParameterError("hypergraph has no labels to filter on")
    keep = h.labels == 1
    return PlantedHypergraph(n=h.n, k=h.k, sigma=h.sigma, hyperedges=h.hyperedges[keep])


@dataclasses.dataclass(frozen=True)
class ColumnCodec:
    """Mixed-radix codec between column ids and ordered (r-1)-tuples.

    id = sum_j tuple[j] * n^(r-2-j), so n2 = n^(r-1) ids exist; only the
    columns actually hit by an edge are stored in the graph.
    """

    n: int
    r: int

    def __post_init__(self) -> None:
        if self.r < 2:
            raise InvalidParameterError("codec needs r >= 2")
        if self.n_columns > _INDEX_GUARD:
            raise SizeGuardError(f"n^(r-1) = {self.n_columns} exceeds the index guard")

    @property
    def n_columns(self) -> int:
        return self.n ** (self.r - 1)

    def encode(self, tuples: np.ndarray) -> np.ndarray:
        arr = np.asarray(tuples, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != self.r - 1:
            raise DimensionMismatchError(f"tuples must be (m, {self.r - 1})")
        if arr.size and (arr.min() < 0 or arr.max() >= self.n):
            raise InvalidParameterError("tuple entries must lie in [0, n)")
        powers = self.n ** np.arange(self.r - 2, -1, -1, dtype=np.int64)
        return arr @ powers

    def decode(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_columns):
            raise InvalidParameterError("column id out of range")
        out = np.empty((ids.size, self.r - 1), dtype=np.int64)
        rem = ids
        for j in range(self.r - 2, -1, -1):
            out[:, j] = rem % self.n
            rem = rem // self.n
        return out

    def column_labels(self, sigma) -> np.ndarray:
        """tau of every column, as the product of its tuple's sigma values."""
        if self.n_columns > 10_000_000:
            raise SizeGuardError("materializing all column labels is out of desk scale")
        sigma = as_labeling(sigma, self.n)
        ids = np.arange(self.n_columns)
        return np.prod(sigma.take(self.decode(ids)), axis=1).astype(np.int8)


@dataclasses.dataclass(frozen=True)
class ReducedGraph:
    """Output of the hypergraph-to-bipartite reduction.

    raw_edges preserves one bipartite edge per hyperedge (so counts are
    conserved and frequency statistics are unbiased); graph collapses
    them to the simple bipartite graph the partitioners consume. tau is
    the induced column truth (product of sigma over the tuple) when the
    hypergraph carried sigma.
    """

    graph: BipartiteGraph
    codec: ColumnCodec
    raw_edges: np.ndarray
    tau_active: Optional[np.ndarray]


def reduce_to_bipartite(
    h: PlantedHypergraph,
    s,
    seed: int,
    q: Optional[PlantingFunction] = None,
    delta: Optional[float] = None,
) -> ReducedGraph:
    """Project hyperedges to the positions in s, split 1/(r-1) at random.

    Each projected r-tuple donates one uniformly chosen entry as the row
    vertex; the remaining entries, in order, form the column tuple. The
    induced bipartite model has delta' = 1 + 2^k Q_hat(S); pass q to get
    a warning when that coefficient vanishes (no signal survives the
    projection), and delta to stamp the known parameter on the graph.
    """
    positions = sorted(set(int(i) for i in s))
    if any(i < 0 or i >= h.k for i in positions):
        raise InvalidParameterError(f"s must be a subset of positions 0..{h.k - 1}")
    r = len(positions)
    if r < 2:
        raise InvalidParameterError(
            "a 1-uniform projection yields no bipartite structure; need |s| >= 2"
        )
    if q is not None:
        coef = fourier_coefficient(q, positions)
        if abs(coef) <= _COEF_TOL:
            warnings.warn(
                "Q_hat(S) ~ 0: the projection carries no planted signal",
                stacklevel=2,
            )
    codec = ColumnCodec(n=h.n, r=r)
    proj = h.hyperedges[:, positions]
    m = proj.shape[0]
    rng = seeding.generator(seed, "reduce-split")
    side = rng.integers(0, r, size=m)
    rows = np.empty(m, dtype=np.int64)
    cols = np.empty((m, r - 1), dtype=np.int64)
    keep = np.ones(r, dtype=bool)
    for c in range(r):
        hit = side == c
        rows[hit] = proj[hit, c]
        keep[:] = True
        keep[c] = False
        cols[hit] = proj[hit][:, keep]
    raw = np.column_stack([rows, codec.encode(cols)])
    if delta is not None and not 0.0 <= delta <= 2.0:
        raise InvalidParameterError(f"delta must be in [0, 2], got {delta!r}")
    n1, n2 = h.n, codec.n_columns
    density = min(0.5, raw.shape[0] / (n1 * n2)) if raw.size else 0.0
    params = ModelParams(n1=n1, n2=n2, p=density, delta=1.0 if delta is None else delta)
    unique = np.unique(raw, axis=0) if raw.size else raw.reshape(0, 2)
    graph = BipartiteGraph.from_edges(params, unique)
    tau_active = None
    if h.sigma is not None:
        tau_active = np.prod(
            h.sigma.take(codec.decode(graph.active_column_ids)), axis=1
        ).astype(np.int8)
    return ReducedGraph(graph=graph, codec=codec, raw_edges=raw, tau_active=tau_active)


def fourier_coefficient(q: PlantingFunction, s) -> float:
    """Single Q_hat(S) without building the whole report."""
    mask = 0
    for i in set(int(j) for j in s):
        if i < 0 or i >= q.k:
            raise InvalidParameterError(f"position {i} outside 0..{q.k - 1}")
        mask |= 1 << i
    signs = 1 - 2 * (_popcount(np.arange(1 << q.k) & mask) & 1)
    return float(2.0**-q.k * (q.table @ signs))


def as_literal_labeling(sigma) -> Labeling:
    """Extend a variable labeling to the 2n literals: 2i = x_i, 2i+1 = -x_i."""
    sigma = as_labeling(sigma)
    out = np.empty(2 * len(sigma), dtype=np.int8)
    out[0::2] = sigma.values
    out[1::2] = -sigma.values
    return Labeling(out)


def literal_index(var: int, negated: bool = False) -> int:
    return 2 * var + int(negated)


def save_planting(q: PlantingFunction, path) -> None:
    """Text format: `k` on line 1, then 2^k lines `+-1 ... +-1 mass`."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{q.k}\n")
        for mask in range(1 << q.k):
            pat = " ".join(f"{int(x):+d}" for x in index_pattern(mask, q.k))
            fh.write(f"{pat} {float(q.table[mask])!r}\n")


def load_planting(path) -> PlantingFunction:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines:
        raise InvalidParameterError(f"{path}: empty planting file")
    try:
        k = int(lines[0])
    except ValueError as exc:
        raise InvalidParameterError(f"{path}: bad arity line {lines[0]!r}") from exc
    if len(lines) != 1 + (1 << k):
        raise InvalidParameterError(
            f"{path}: expected {1 << k} mass lines, found {len(lines) - 1}"
        )
    table = np.zeros(1 << k)
    seen = set()
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != k + 1:
            raise InvalidParameterError(f"{path}: bad mass line {ln!r}")
        try:
            pattern = [int(tok) for tok in parts[:k]]
            mass = float(parts[k])
        except ValueError as exc:
            raise InvalidParameterError(f"{path}: bad mass line {ln!r}") from exc
        idx = pattern_index(pattern)
        if idx in seen:
            raise InvalidParameterError(f"{path}: duplicate pattern in {ln!r}")
        seen.add(idx)
        table[idx] = mass
    return PlantingFunction(k, table)


def save_hypergraph(h: PlantedHypergraph, path) -> None:
    """Text format: header `phyp n k`, one tuple per line, optional 0/1 label."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"phyp {h.n} {h.k}\n")
        for i in range(h.n_edges):
            row = " ".join(str(int(v)) for v in h.hyperedges[i])
            if h.labels is not None:
                row += f" {int(h.labels[i])}"
            fh.write(row + "\n")


def load_hypergraph(path) -> PlantedHypergraph:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines or not lines[0].startswith("phyp"):
        raise InvalidParameterError(f"{path}: missing `phyp n k` header")
    head = lines[0].split()
    if len(head) != 3:
        raise InvalidParameterError(f"{path}: bad header {lines[0]!r}")
    try:
        n, k = int(head[1]), int(head[2])
    except ValueError as exc:
        raise InvalidParameterError(f"{path}: bad header {lines[0]!r}") from exc
    rows, labels = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) == k:
            lab = None
        elif len(parts) == k + 1:
            lab = parts[k]
        else:
            raise InvalidParameterError(f"{path}: bad tuple line {ln!r}")
        try:
            rows.append([int(tok) for tok in parts[:k]])
            labels.append(None if lab is None else int(lab))
        except ValueError as exc:
            raise InvalidParameterError(f"{path}: bad tuple line {ln!r}") from exc
    has_labels = [lab is not None for lab in labels]
    if any(has_labels) and not all(has_labels):
        raise InvalidParameterError(f"{path}: labels must be on all lines or none")
    edges = np.array(rows, dtype=np.int64).reshape(-1, k)
    lab_arr = np.array(labels, dtype=np.int8) if labels and all(has_labels) else None
    return PlantedHypergraph(n=n, k=k, sigma=None, hyperedges=edges, labels=lab_arr)
