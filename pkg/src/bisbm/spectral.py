"""Matrix-free spectral engine.

Operators are exposed as handles wrapping an apply closure; applies cost
O(edges) and never allocate per-column state, so the right side of a graph
can be astronomically large. Eigenpairs come from power iteration with
explicit deflation (top-t for t <= 3; a Krylov solver would be overkill and
harder to make bit-reproducible). All iterations are deterministic given the
seed, and returned vectors are defined only up to sign.

The non-backtracking operator acts on the 2|E| directed edges of a simple
graph. It is not symmetric; its leading pair is found by plain power
iteration with Rayleigh-quotient stopping on the real part, the second after
a two-sided rank-1 deflation built from the edge-reversal involution (the
left leading eigenvector is the reversal of the right one). A complex or
indistinct second eigenvalue surfaces as ConvergenceError, which downstream
detection code reports as "no detection".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import seeding
from .errors import (
    ConvergenceError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    InvalidParameterError,
)
from .model import BipartiteGraph, Labeling

_TINY = 1e-300


@dataclass
class LinearOperatorHandle:
    """A linear map given by its apply closure; no matrix is materialized."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    symmetric: bool
    meta: dict = field(default_factory=dict)

    def to_dense(self, limit: int = 4096) -> np.ndarray:
        """Materialize by applying to the standard basis; oracle scale only."""
        if self.dim > limit:
            raise InvalidParameterError(f"refusing dense form above dim {limit}")
        eye = np.eye(self.dim)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.dim)])


@dataclass
class SpectralResult:
    """Eigen- or singular pairs in decreasing magnitude order.

    vectors[:, j] belongs to values[j]; each vector is unit and sign-blind.
    residuals[j] is ||A v - value v|| of the solved operator.
    """

    values: np.ndarray
    vectors: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray


@dataclass
class SimpleGraph:
    """Undirected simple graph: n vertices, edges as (m, 2) rows with u < w,
    sorted lexicographically, no duplicates."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        self.n = int(self.n)
        if self.n < 1:
            raise InvalidParameterError("graph needs at least one vertex")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise InvalidParameterError("edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise InvalidParameterError("edges must satisfy u < w")
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if e.shape[0] > 1 and np.any(np.all(np.diff(e, axis=0) == 0, axis=1)):
                raise InvalidParameterError("duplicate edges")
        e.setflags(write=False)
        self.edges = e

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)


def gram_operator(g: BipartiteGraph) -> LinearOperatorHandle:
    """x -> M (M^T x) on the row side, O(edges) per apply."""
    mat = g.biadjacency_csr()
    mat_t = g.biadjacency_csr_t()

    def apply(x: np.ndarray) -> np.ndarray:
        return mat @ (mat_t @ x)

    return LinearOperatorHandle(g.params.n1, apply, symmetric=True)


def deleted_gram_operator(g: BipartiteGraph) -> LinearOperatorHandle:
    """The gram operator with its diagonal (the row degrees) removed."""
    mat = g.biadjacency_csr()
    mat_t = g.biadjacency_csr_t()
    deg = g.row_degrees.astype(np.float64)

    def apply(x: np.ndarray) -> np.ndarray:
        return mat @ (mat_t @ x) - deg * x

    return LinearOperatorHandle(g.params.n1, apply, symmetric=True)


def top_eigs(
    op: LinearOperatorHandle,
    t: int,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> SpectralResult:
    """Top-t eigenpairs of a symmetric operator by magnitude.

    Power iteration with deflation; the j-th pair iterates in the orthogonal
    complement of the accepted ones. Convergence is judged on the residual
    against the *undeflated* operator (the contamination through earlier,
    only-approximately-converged vectors is included), so the documented
    bound ||A v - lambda v|| <= tol * max(1, |lambda|) holds on return.
    Earlier pairs are accepted at tol/8 to keep that contamination small.
    """
    if not op.symmetric:
        raise InvalidParameterError("top_eigs requires a symmetric operator")
    if not 1 <= t <= op.dim:
        raise InvalidParameterError(f"t={t} outside [1, dim={op.dim}]")
    if tol <= 0 or max_iter < 1:
        raise InvalidParameterError("tol must be > 0 and max_iter >= 1")
    rng = seeding.generator(seed, "power-iteration")
    dim = op.dim
    basis = np.zeros((dim, 0))
    iterations = []
    # Stage 1: sequential deflated power iteration builds the subspace. The
    # per-pair stop is on the deflated residual at tol/4; cross-contamination
    # between the approximate vectors is cleaned up in stage 2.
    for j in range(t):
        v = rng.standard_normal(dim)
        v -= basis @ (basis.T @ v)
        nv = np.linalg.norm(v)
        while nv < 1e-12:  # astronomically unlikely; redraw keeps determinism
            v = rng.standard_normal(dim)
            v -= basis @ (basis.T @ v)
            nv = np.linalg.norm(v)
        v /= nv
        it = 0
        for it in range(1, max_iter + 1):
            w = op.apply(v)
            lam = float(v @ w)
            w_p = w - basis @ (basis.T @ w)
            resid = float(np.linalg.norm(w_p - lam * v))
            if resid <= 0.25 * tol * max(1.0, abs(lam)):
                break
            nw = np.linalg.norm(w_p)
            if nw < _TINY:
                break  # annihilated: eigenvalue 0, v is as good as anything
            v = w_p / nw
            v -= basis @ (basis.T @ v)  # re-orthogonalize against drift
            v /= np.linalg.norm(v)
        basis = np.column_stack([basis, v])
        iterations.append(it)
    # Stage 2: Rayleigh-Ritz polish (blocked power sweeps). The rotation
    # diagonalizes the operator inside the subspace, so each pair's true
    # residual ||A v - lam v|| drops to the subspace error itself; sweeps
    # continue until the documented bound holds for every pair.
    budget = max_iter - max(iterations)
    sweeps = 0
    while True:
        w_block = np.column_stack([op.apply(basis[:, j]) for j in range(t)])
        small = basis.T @ w_block
        small = 0.5 * (small + small.T)
        lam_small, z = np.linalg.eigh(small)
        order = np.argsort(-np.abs(lam_small))
        lam_small, z = lam_small[order], z[:, order]
        basis = basis @ z
        w_block = w_block @ z
        resid_block = w_block - basis * lam_small
        residuals = np.linalg.norm(resid_block, axis=0)
        if np.all(residuals <= tol * np.maximum(1.0, np.abs(lam_small))):
            break
        if sweeps >= budget:
            raise ConvergenceError(
                f"residuals {residuals} above tol after {max_iter} iterations",
                residuals=list(residuals),
            )
        sweeps += 1
        norms = np.linalg.norm(w_block, axis=0)
        if np.all(norms < _TINY):
            break  # zero operator on the subspace: eigenvalues are 0
        basis, _ = np.linalg.qr(np.where(norms > _TINY, w_block / np.maximum(norms, _TINY), basis))
    return SpectralResult(
        values=lam_small.copy(),
        vectors=basis,
        iterations=np.array([it + sweeps for it in iterations]),
        residuals=residuals.copy(),
    )


def top_singulars(
    g: BipartiteGraph,
    t: int,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> SpectralResult:
    """Top-t singular values and left singular vectors of the biadjacency.

    Solved on the gram operator; values are the square roots of its
    eigenvalues (clipped at zero) and residuals are those of the gram solve.
    """
    res = top_eigs(gram_operator(g), t, tol=tol, max_iter=max_iter, seed=seed)
    return SpectralResult(
        values=np.sqrt(np.clip(res.values, 0.0, None)),
        vectors=res.vectors,
        iterations=res.iterations,
        residuals=res.residuals,
    )


def nonbacktracking_operator(sg: SimpleGraph) -> LinearOperatorHandle:
    """Operator on directed edges: (Bx)_(u->v) = sum over w ~ v, w != u of
    x_(v->w). meta carries the directed-edge layout for aggregation."""
    m = sg.n_edges
    src = np.empty(2 * m, dtype=np.int64)
    dst = np.empty(2 * m, dtype=np.int64)
    src[0::2], dst[0::2] = sg.edges[:, 0], sg.edges[:, 1]
    src[1::2], dst[1::2] = sg.edges[:, 1], sg.edges[:, 0]
    twin = np.arange(2 * m, dtype=np.int64) ^ 1
    n = sg.n

    def apply(x: np.ndarray) -> np.ndarray:
        out_sums = np.bincount(src, weights=x, minlength=n)
        return out_sums[dst] - x[twin]

    return LinearOperatorHandle(
        2 * m, apply, symmetric=False, meta={"src": src, "dst": dst, "twin": twin, "n": n}
    )


def _power_nonsym(apply, dim, tol, max_iter, rng):
    """Plain power iteration, Rayleigh stopping on the real part. Returns
    (value, vector, iterations, residual) or raises ConvergenceError (the
    expected outcome when the target eigenvalue is complex or indistinct)."""
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    best = np.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        best = min(best, resid)
        if resid <= tol * max(1.0, abs(lam)):
            return lam, v, it, resid
        nw = np.linalg.norm(w)
        if nw < _TINY:
            return 0.0, v, it, float(np.linalg.norm(w))
        v = w / nw
    raise ConvergenceError(
        f"non-backtracking iteration: residual {best:.3e} after {max_iter} iterations",
        residuals=[best],
    )


def nb_partition(
    sg: SimpleGraph,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> Labeling:
    """Two-community labeling from the second non-backtracking eigenvector.

    The second right eigenvector (after two-sided deflation of the leading
    pair; the left leading vector is the edge reversal of the right one) is
    aggregated to vertices by summing incoming-edge entries; signs of the
    mean-centered aggregate are the labels. Zero scores and isolated
    vertices get +1. Raises ConvergenceError / DegenerateSpectrumError when
    there is no usable second eigenvalue; callers treat that as no
    detection.
    """
    if sg.n_edges == 0:
        return Labeling(np.ones(sg.n, dtype=np.int8))
    op = nonbacktracking_operator(sg)
    dst, twin = op.meta["dst"], op.meta["twin"]
    lam1, v1, _, _ = _power_nonsym(
        op.apply, op.dim, tol, max_iter, seeding.generator(seed, "nb-leading")
    )
    if abs(lam1) < 1e-9:
        raise DegenerateSpectrumError("non-backtracking spectral radius is ~ 0")
    u1 = v1[twin]
    denom = float(u1 @ v1)
    if abs(denom) < 1e-12:
        raise DegenerateSpectrumError("leading left/right eigenvectors are orthogonal")

    def deflated(x: np.ndarray) -> np.ndarray:
        return op.apply(x) - (lam1 / denom) * (u1 @ x) * v1

    lam2, v2, _, _ = _power_nonsym(
        deflated, op.dim, tol, max_iter, seeding.generator(seed, "nb-second")
    )
    if abs(lam2) < 1e-9:
        raise DegenerateSpectrumError("second non-backtracking eigenvalue is ~ 0")
    scores = np.bincount(dst, weights=v2, minlength=sg.n)
    scores -= scores.mean()
    return Labeling(np.where(scores < 0, -1, 1).astype(np.int8))


def project_out(op: LinearOperatorHandle, vectors: np.ndarray) -> LinearOperatorHandle:
    """Handle for P A P with P the projector orthogonal to the given columns."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if v.shape[0] != op.dim:
        v = v.T
    if v.shape[0] != op.dim:
        raise DimensionMismatchError("vectors do not match operator dim")
    q, _ = np.linalg.qr(v)

    def apply(x: np.ndarray) -> np.ndarray:
        x = x - q @ (q.T @ x)
        y = op.apply(x)
        return y - q @ (q.T @ y)

    return LinearOperatorHandle(op.dim, apply, symmetric=op.symmetric, meta=dict(op.meta))
