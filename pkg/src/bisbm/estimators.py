"""Scikit-learn style wrappers around the partitioners.

Each estimator consumes a 0/1 biadjacency matrix (dense or scipy sparse),
clusters the row side into two signed groups, and exposes the result
through the standard clusterer surface: fit, fit_predict, labels_,
get_params/set_params. Ground truth can be passed as y to get an overlap
score. Clustering here is transductive, so there is no predict on unseen
rows and no transform.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import partition
from .errors import InvalidParameterError
from .model import BipartiteGraph, ModelParams, as_labeling


def biadjacency_graph(X, delta: float = 1.0) -> BipartiteGraph:
    """Validate a 0/1 matrix and wrap it as a BipartiteGraph.

    The attached params carry the matrix shape, the observed density
    (clamped into the model's range), and the supplied delta; they label
    the data, they do not assert how it was generated.
    """
    X = check_array(X, accept_sparse=["csr", "csc", "coo"], dtype=None)
    data = X.data if sp.issparse(X) else np.asarray(X)
    values = np.unique(np.asarray(data).ravel()) if np.asarray(data).size else np.array([0])
    if not np.all(np.isin(values, (0, 1))):
        raise InvalidParameterError("biadjacency entries must be 0 or 1")
    n1, n2 = X.shape
    nnz = int(X.nnz) if sp.issparse(X) else int(np.count_nonzero(X))
    density = min(0.5, nnz / max(1, n1 * n2))
    return BipartiteGraph.from_biadjacency(X, ModelParams(n1, n2, density, delta))


class _BiadjacencyClusterer(BaseEstimator, ClusterMixin):
    """Shared fit plumbing: validate X, build the graph, run the solver."""

    def _solve(self, g: BipartiteGraph, sigma) -> partition.PartitionOutcome:
        raise NotImplementedError

    def _delta(self) -> float:
        return self.delta

    def fit(self, X, y=None):
        g = biadjacency_graph(X, delta=self._delta())
        sigma = as_labeling(y, g.params.n1) if y is not None else None
        self.outcome_ = self._solve(g, sigma)
        self.labels_ = self.outcome_.labels.values.astype(np.int64)
        self.n_features_in_ = g.params.n2
        return self

    def score(self, X=None, y=None) -> float:
        """Overlap between the fitted labels and y (1.0 = perfect, up to
        global sign; 0.5 = chance)."""
        check_is_fitted(self, "labels_")
        if y is None:
            raise InvalidParameterError("score needs ground-truth labels y")
        return partition.overlap(self.labels_, as_labeling(y, len(self.labels_)))


class SVDBipartitioner(_BiadjacencyClusterer):
    """Second left singular vector of the biadjacency, sign-rounded.

    delta only matters at the endpoints {0, 2}, where the label direction
    is read from the top-2 subspace orthogonally to all-ones.
    """

    def __init__(
        self,
        delta: float = 1.0,
        tol: float = 1e-8,
        max_iter: int = 10_000,
        seed: int = 0,
        detect_margin: float = 0.05,
    ):
        self.delta = delta
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.detect_margin = detect_margin

    def _solve(self, g, sigma):
        return partition.svd_partition(
            g,
            sigma=sigma,
            tol=self.tol,
            max_iter=self.max_iter,
            seed=self.seed,
            detect_margin=self.detect_margin,
        )


class DiagonalDeletionBipartitioner(_BiadjacencyClusterer):
    """Second eigenvector of the gram matrix with its diagonal removed."""

    def __init__(
        self,
        delta: float = 1.0,
        tol: float = 1e-8,
        max_iter: int = 10_000,
        seed: int = 0,
        detect_margin: float = 0.05,
    ):
        self.delta = delta
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.detect_margin = detect_margin

    def _solve(self, g, sigma):
        return partition.dd_svd_partition(
            g,
            sigma=sigma,
            tol=self.tol,
            max_iter=self.max_iter,
            seed=self.seed,
            detect_margin=self.detect_margin,
        )


class ReductionDetector(_BiadjacencyClusterer):
    """Degree-2 projection, Poisson sparsification, non-backtracking split.

    delta must be set to the assumed affinity (it fixes the subsample
    rate); there is no safe default, so fit raises until it is given.
    """

    def __init__(
        self,
        delta: Optional[float] = None,
        epsilon: float = 1.0,
        subsample_rate_override: Optional[float] = None,
        with_replacement: bool = False,
        tol: float = 1e-8,
        max_iter: int = 10_000,
        seed: int = 0,
        detect_margin: float = 0.05,
    ):
        self.delta = delta
        self.epsilon = epsilon
        self.subsample_rate_override = subsample_rate_override
        self.with_replacement = with_replacement
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.detect_margin = detect_margin

    def _delta(self) -> float:
        if self.delta is None:
            raise InvalidParameterError("ReductionDetector requires delta")
        return self.delta

    def _solve(self, g, sigma):
        dp = partition.DetectionParams(
            epsilon=self.epsilon,
            delta_hat=self._delta(),
            subsample_rate_override=self.subsample_rate_override,
        )
        return partition.sbm_reduction_detect(
            g,
            dp,
            sigma=sigma,
            tol=self.tol,
            max_iter=self.max_iter,
            seed=self.seed,
            detect_margin=self.detect_margin,
            with_replacement=self.with_replacement,
        )
