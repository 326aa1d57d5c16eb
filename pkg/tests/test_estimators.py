"""Tests for the scikit-learn wrapper estimators."""

import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone

from bisbm import partition
from bisbm.errors import DimensionMismatchError, InvalidParameterError
from bisbm.estimators import (
    DiagonalDeletionBipartitioner,
    ReductionDetector,
    SVDBipartitioner,
    biadjacency_graph,
)
from bisbm.model import ModelParams, gen_bipartite_sbm, gen_labeling


def planted_instance(n1=24, n2=48, p=0.25, delta=0.3, seed=31):
    params = ModelParams(n1=n1, n2=n2, p=p, delta=delta)
    sigma = gen_labeling(n1, seed=seed)
    tau = gen_labeling(n2, seed=seed + 1)
    g = gen_bipartite_sbm(params, sigma, tau, seed=seed + 2)
    return g, sigma


class TestValidation:
    def test_non_binary_entries(self):
        with pytest.raises(InvalidParameterError, match="0 or 1"):
            biadjacency_graph(np.array([[0, 2], [1, 0]]))

    def test_wrong_rank(self):
        with pytest.raises(ValueError):
            biadjacency_graph(np.zeros((2, 2, 2)))

    def test_delta_range(self):
        with pytest.raises(InvalidParameterError):
            biadjacency_graph(np.eye(3), delta=2.5)

    def test_sparse_matches_dense(self):
        g, _ = planted_instance()
        dense = g.to_dense()
        g_dense = biadjacency_graph(dense, delta=0.3)
        g_sparse = biadjacency_graph(sp.csr_matrix(dense), delta=0.3)
        assert np.array_equal(g_dense.edge_u, g_sparse.edge_u)
        assert np.array_equal(g_dense.edge_v, g_sparse.edge_v)
        assert g_dense.params == g_sparse.params

    def test_reduction_requires_delta(self):
        with pytest.raises(InvalidParameterError, match="delta"):
            ReductionDetector().fit(np.eye(4))

    def test_y_length_checked(self):
        g, _ = planted_instance()
        with pytest.raises(DimensionMismatchError):
            SVDBipartitioner(delta=0.3).fit(g.to_dense(), y=np.ones(5))


class TestSklearnSurface:
    @pytest.mark.parametrize(
        "est",
        [
            SVDBipartitioner(delta=0.3, seed=7),
            DiagonalDeletionBipartitioner(delta=0.3, tol=1e-6),
            ReductionDetector(delta=0.2, epsilon=1.0, seed=3),
        ],
    )
    def test_get_params_clone_roundtrip(self, est):
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params() == params
        est.set_params(seed=99)
        assert est.get_params()["seed"] == 99

    def test_fit_returns_self_and_sets_attributes(self):
        g, sigma = planted_instance()
        est = SVDBipartitioner(delta=0.3)
        assert est.fit(g.to_dense(), y=sigma.values) is est
        assert est.labels_.shape == (24,)
        assert set(np.unique(est.labels_)) <= {-1, 1}
        assert est.n_features_in_ == 48
        assert est.outcome_.overlap == est.score(y=sigma.values)

    def test_fit_predict(self):
        g, _ = planted_instance()
        est = DiagonalDeletionBipartitioner(delta=0.3)
        labels = est.fit_predict(g.to_dense())
        assert np.array_equal(labels, est.labels_)

    def test_score_before_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            SVDBipartitioner().score(y=np.ones(3))


class TestAgreementWithDirectCalls:
    def test_svd_matches_direct(self):
        g, sigma = planted_instance()
        est = SVDBipartitioner(delta=0.3, seed=4).fit(g.to_dense(), y=sigma.values)
        direct = partition.svd_partition(g, sigma=sigma, seed=4)
        assert np.array_equal(est.labels_, direct.labels.values)
        assert est.outcome_.overlap == direct.overlap

    def test_dd_matches_direct(self):
        g, sigma = planted_instance(seed=32)
        est = DiagonalDeletionBipartitioner(delta=0.3, seed=4).fit(
            sp.csr_matrix(g.to_dense()), y=sigma.values
        )
        direct = partition.dd_svd_partition(g, sigma=sigma, seed=4)
        assert np.array_equal(est.labels_, direct.labels.values)
        assert est.outcome_.overlap == direct.overlap

    def test_reduction_matches_direct_above_threshold(self):
        n1, n2, delta = 600, 60_000, 0.2
        p = 2.0 * (delta - 1.0) ** -2 / np.sqrt(n1 * n2)
        params = ModelParams(n1=n1, n2=n2, p=p, delta=delta)
        sigma = gen_labeling(n1, seed=70)
        tau = gen_labeling(n2, seed=71)
        g = gen_bipartite_sbm(params, sigma, tau, seed=72)
        X = sp.csr_matrix(
            (np.ones(g.n_edges), (g.edge_u, g.edge_v)), shape=(n1, n2)
        )
        est = ReductionDetector(delta=delta, epsilon=1.0, seed=5).fit(X, y=sigma.values)
        direct = partition.sbm_reduction_detect(
            g, partition.DetectionParams(epsilon=1.0, delta_hat=delta), sigma=sigma, seed=5
        )
        assert np.array_equal(est.labels_, direct.labels.values)
        assert est.outcome_.overlap == direct.overlap
        assert est.outcome_.detected
        assert est.outcome_.overlap >= 0.6
