"""Planting-module tests.

The Fourier engine is checked against a direct enumeration oracle (the
2^k-term sum written out independently); generator laws are checked
against exact binomial/uniform oracles; the reduction's label frequencies
against the closed-form ratio delta':(2-delta'), which is exact for the
parity family under a balanced labeling.
"""

import itertools
from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency, chisquare

from bisbm.errors import InvalidParameterError, NoSignalError, SizeGuardError
from bisbm.model import Labeling, gen_labeling
from bisbm.planting import (
    ColumnCodec,
    PlantedHypergraph,
    PlantingFunction,
    as_literal_labeling,
    filter_positive,
    fourier,
    fourier_coefficient,
    gen_goldreich,
    gen_planted_hypergraph,
    index_pattern,
    literal_index,
    load_hypergraph,
    load_planting,
    parity_family,
    pattern_index,
    reduce_to_bipartite,
    save_hypergraph,
    save_planting,
)


def brute_force_fourier(q, s):
    # independent oracle: the definition, written as a sum over patterns
    total = 0.0
    for pattern in itertools.product((1, -1), repeat=q.k):
        chi = 1
        for i in s:
            chi *= pattern[i]
        total += q.mass(pattern) * chi
    return total / 2**q.k


def test_pattern_codec_round_trip():
    for k in (1, 2, 4):
        for idx in range(1 << k):
            assert pattern_index(index_pattern(idx, k)) == idx
    assert pattern_index((1, 1, 1)) == 0  # mask 0 = all +1
    assert pattern_index((-1, 1, 1)) == 1  # bit i set iff x_i = -1
    with pytest.raises(InvalidParameterError):
        pattern_index((1, 0, 1))


def test_planting_function_validation():
    with pytest.raises(InvalidParameterError):
        PlantingFunction(2, [0.5, 0.5, 0.5, 0.5])  # sums to 2
    with pytest.raises(InvalidParameterError):
        PlantingFunction(2, [1.5, -0.5, 0.0, 0.0])
    with pytest.raises(Exception):
        PlantingFunction(2, [0.5, 0.5])  # wrong size
    q_dict = PlantingFunction(2, {(1, 1): 0.7, (-1, -1): 0.3})
    assert q_dict.mass((1, 1)) == 0.7
    assert q_dict.mass((1, -1)) == 0.0
    with pytest.raises(Exception):
        PlantingFunction(2, {(1, 1, 1): 1.0})  # wrong arity pattern


def test_fourier_matches_brute_force():
    rng = np.random.default_rng(7)
    for k in (2, 3, 4):
        masses = rng.random(1 << k)
        masses /= masses.sum()
        q = PlantingFunction(k, masses)
        rep = fourier(q)
        for size in range(k + 1):
            for s in itertools.combinations(range(k), size):
                oracle = brute_force_fourier(q, s)
                assert rep.coefficients[frozenset(s)] == pytest.approx(oracle, abs=1e-14)
                assert fourier_coefficient(q, s) == pytest.approx(oracle, abs=1e-14)
        assert rep.coefficients[frozenset()] == pytest.approx(2.0**-k, abs=1e-14)


def test_fourier_examples_and_no_signal():
    with pytest.raises(NoSignalError):
        fourier(PlantingFunction(3, np.full(8, 0.125)))
    rep = fourier(parity_family(3, 1.5))
    assert rep.coefficient(frozenset({0, 1, 2})) == pytest.approx(0.0625, abs=1e-15)
    assert rep.distribution_complexity == 3
    assert rep.argmin_sets == (frozenset({0, 1, 2}),)
    point = PlantingFunction(2, {(1, 1): 1.0})
    rep = fourier(point)
    assert rep.coefficient({0}) == pytest.approx(0.25, abs=1e-15)
    assert rep.coefficient({1}) == pytest.approx(0.25, abs=1e-15)
    assert rep.distribution_complexity == 1
    assert set(rep.argmin_sets) == {frozenset({0}), frozenset({1})}


def test_parity_reduction_parameter_identity():
    # 1 + 2^k Q_hat(full set) recovers delta exactly for the parity family
    for delta in (0.2, 0.5, 1.5):
        for k in (2, 3, 4):
            coef = fourier_coefficient(parity_family(k, delta), range(k))
            assert 1 + 2**k * coef == pytest.approx(delta, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.lists(st.floats(0.01, 10.0), min_size=16, max_size=16))
def test_parseval(k, raw):
    masses = np.array(raw[: 1 << k])
    masses /= masses.sum()
    q = PlantingFunction(k, masses)
    coeffs = [
        fourier_coefficient(q, s)
        for size in range(k + 1)
        for s in itertools.combinations(range(k), size)
    ]
    lhs = float(np.sum(np.array(coeffs) ** 2))
    rhs = 2.0**-k * float(np.sum(masses**2))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_gen_planted_precondition_and_pattern_law():
    q = parity_family(2, 2.0)
    with pytest.raises(InvalidParameterError):
        gen_planted_hypergraph(10, q, p=0.6, seed=0)  # max rate 2*0.6 > 1
    # delta=2 parity: cross-sign tuples have Q=0 and never appear
    sigma = gen_labeling(20, seed=4, balanced=True)
    h = gen_planted_hypergraph(20, q, p=0.4, seed=5, sigma=sigma)
    prods = np.prod(sigma.take(h.hyperedges), axis=1)
    assert h.n_edges > 0 and np.all(prods == 1)
    # no duplicate tuples within a sample (the within-pattern law is a
    # uniform subset, not i.i.d. draws)
    assert np.unique(h.hyperedges, axis=0).shape[0] == h.n_edges


def test_gen_planted_uniform_edge_count():
    # uniform Q: every tuple appears with probability exactly p, so the
    # count is Binomial(n^2, p) with mean 9
    n, p, trials = 30, 0.01, 500
    q = PlantingFunction(2, np.full(4, 0.25))
    counts = [gen_planted_hypergraph(n, q, p, seed=s).n_edges for s in range(trials)]
    mean = np.mean(counts)
    se = np.std(counts, ddof=1) / sqrt(trials)
    assert abs(mean - n * n * p) <= 3 * se


def test_gen_planted_per_pattern_binomial_means():
    # balanced sigma on n=40: each of the four sign patterns has exactly
    # 400 ordered tuples; parity delta=1.5 rates are 1.5p (same sign) and
    # 0.5p (cross), giving exact means 12 and 4 at p=0.02
    n, p, trials = 40, 0.02, 300
    q = parity_family(2, 1.5)
    sigma = gen_labeling(n, seed=11, balanced=True)
    same = np.zeros(trials)
    cross = np.zeros(trials)
    for t in range(trials):
        h = gen_planted_hypergraph(n, q, p, seed=100 + t, sigma=sigma)
        prods = np.prod(sigma.take(h.hyperedges), axis=1)
        same[t] = np.sum(prods == 1)
        cross[t] = np.sum(prods == -1)
    for vals, mean_expect in ((same, 2 * 400 * 1.5 * p), (cross, 2 * 400 * 0.5 * p)):
        se = np.std(vals, ddof=1) / sqrt(trials)
        assert abs(np.mean(vals) - mean_expect) <= 3 * se


def test_gen_planted_determinism():
    q = parity_family(3, 0.4)
    a = gen_planted_hypergraph(25, q, 0.01, seed=42)
    b = gen_planted_hypergraph(25, q, 0.01, seed=42)
    assert np.array_equal(a.hyperedges, b.hyperedges)
    assert a.sigma == b.sigma


def test_goldreich_trivials_and_filter():
    ones = gen_goldreich(15, 3, lambda x: 1, m=50, seed=1)
    assert np.all(ones.labels == 1)
    sigma = Labeling(np.ones(15, dtype=np.int8))
    par = gen_goldreich(15, 3, lambda x: int(np.prod(x) == 1), m=50, seed=2, sigma=sigma)
    assert np.all(par.labels == 1)  # all inputs +1, parity is +1
    mixed = gen_goldreich(15, 2, [1, 0, 0, 1], m=200, seed=3)
    kept = filter_positive(mixed)
    assert kept.labels is None
    assert kept.n_edges == int(np.sum(mixed.labels == 1))
    with pytest.raises(InvalidParameterError):
        filter_positive(kept)


def test_goldreich_and_predicate_matches_planted_point_mass():
    # AND-filtered uniform tuples and the point-mass planting are both
    # uniform over the (+1,+1)-pattern tuples; two-sample chi-square on
    # the 36 possible tuples must not separate them
    n = 12
    sigma = gen_labeling(n, seed=21, balanced=True)
    pos = np.flatnonzero(sigma.values == 1)
    cells = {(int(u), int(v)): i for i, (u, v) in enumerate(itertools.product(pos, pos))}
    and_table = [0] * 4
    and_table[pattern_index((1, 1))] = 1

    gold = np.zeros(len(cells), dtype=np.int64)
    for s in range(30):
        h = filter_positive(gen_goldreich(n, 2, and_table, m=120, seed=600 + s, sigma=sigma))
        for u, v in h.hyperedges:
            gold[cells[(int(u), int(v))]] += 1
    point = PlantingFunction(2, {(1, 1): 1.0})
    plant = np.zeros(len(cells), dtype=np.int64)
    for s in range(30):
        h = gen_planted_hypergraph(n, point, p=0.125, seed=900 + s, sigma=sigma)
        for u, v in h.hyperedges:
            plant[cells[(int(u), int(v))]] += 1
    assert gold.sum() > 400 and plant.sum() > 400
    _, pvalue, _, _ = chi2_contingency(np.vstack([gold, plant]))
    assert pvalue >= 1e-3


def test_uniform_distinct_paths():
    from bisbm.planting import _uniform_distinct
    from bisbm import seeding

    rng = seeding.generator(0, "test-distinct")
    small = _uniform_distinct(rng, 10, 10)
    assert small.tolist() == list(range(10))
    # rejection path: universe too big to materialize
    big = _uniform_distinct(rng, 1 << 30, 1000)
    assert big.size == 1000 and np.unique(big).size == 1000
    assert big.min() >= 0 and big.max() < (1 << 30)
    # inclusion uniformity on the rejection path, binned goodness of fit
    counts = np.zeros(8, dtype=np.int64)
    for s in range(400):
        draw = _uniform_distinct(seeding.generator(s, "test-distinct-u"), 1 << 24, 40)
        counts += np.bincount(draw >> 21, minlength=8)
    assert chisquare(counts).pvalue >= 1e-3
    with pytest.raises(InvalidParameterError):
        _uniform_distinct(rng, 3, 4)


def test_codec_round_trip_and_guards():
    codec = ColumnCodec(n=7, r=3)
    assert codec.n_columns == 49
    tuples = np.array([[0, 0], [6, 6], [3, 5], [5, 3]], dtype=np.int64)
    ids = codec.encode(tuples)
    assert np.array_equal(codec.decode(ids), tuples)
    assert ids[0] == 0 and ids[1] == 48
    assert ids[2] != ids[3]  # order matters
    with pytest.raises(InvalidParameterError):
        codec.encode(np.array([[7, 0]]))
    with pytest.raises(InvalidParameterError):
        ColumnCodec(n=5, r=1)
    with pytest.raises(SizeGuardError):
        ColumnCodec(n=10**7, r=10)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 9), st.integers(2, 4), st.data())
def test_codec_round_trip_property(n, r, data):
    codec = ColumnCodec(n=n, r=r)
    tup = data.draw(
        st.lists(st.integers(0, n - 1), min_size=r - 1, max_size=r - 1)
    )
    arr = np.array([tup], dtype=np.int64)
    ids = codec.encode(arr)
    assert 0 <= ids[0] < codec.n_columns
    assert codec.decode(ids).tolist() == [tup]


def test_reduce_validation_and_r2_case():
    h = PlantedHypergraph(
        n=9, k=3, sigma=None, hyperedges=np.array([[2, 5, 7]], dtype=np.int64)
    )
    with pytest.raises(InvalidParameterError):
        reduce_to_bipartite(h, s={1}, seed=0)
    with pytest.raises(InvalidParameterError):
        reduce_to_bipartite(h, s={0, 5}, seed=0)
    red = reduce_to_bipartite(h, s={0, 2}, seed=0)
    assert red.raw_edges.shape == (1, 2)
    u, v = red.raw_edges[0]
    assert (u, v) in {(2, 7), (7, 2)}  # one side chosen uniformly
    assert red.graph.n_edges == 1
    assert red.codec.r == 2 and red.codec.n_columns == 9


def test_reduce_conservation_and_tau():
    q = parity_family(3, 1.5)
    sigma = gen_labeling(18, seed=31, balanced=True)
    h = gen_planted_hypergraph(18, q, p=0.01, seed=32, sigma=sigma)
    red = reduce_to_bipartite(h, s=range(3), seed=33, q=q, delta=1.5)
    assert red.raw_edges.shape[0] == h.n_edges  # one edge per hyperedge
    assert red.graph.params.delta == 1.5
    assert red.graph.params.n2 == 18**2
    # tau of the active columns equals the sigma-product of the decoded tuple
    tups = red.codec.decode(red.graph.active_column_ids)
    assert np.array_equal(red.tau_active, np.prod(sigma.take(tups), axis=1))


def test_reduce_warns_when_projection_has_no_signal():
    q = parity_family(3, 1.5)  # only Q_hat([3]) is nonzero
    h = gen_planted_hypergraph(12, q, p=0.02, seed=41)
    with pytest.warns(UserWarning):
        reduce_to_bipartite(h, s={0, 1}, seed=42, q=q)


def _reduced_same_fraction(delta, trials, n=40, p=0.02, seed0=0):
    q = parity_family(3, delta) if delta != 1.0 else PlantingFunction(3, np.full(8, 0.125))
    same = cross = 0
    for t in range(trials):
        sigma = gen_labeling(n, seed=seed0 + 3 * t, balanced=True)
        h = gen_planted_hypergraph(n, q, p, seed=seed0 + 3 * t + 1, sigma=sigma)
        red = reduce_to_bipartite(h, s=range(3), seed=seed0 + 3 * t + 2)
        taus = np.prod(sigma.take(red.codec.decode(red.raw_edges[:, 1])), axis=1)
        agree = sigma.take(red.raw_edges[:, 0]) == taus
        same += int(np.sum(agree))
        cross += int(np.sum(~agree))
    return same, cross


def test_reduced_edge_frequencies_match_delta_prime():
    # for the parity family with balanced sigma the same:cross ratio of
    # raw reduced edges is exactly delta':(2-delta'): a reduced edge is
    # same-labeled iff the full product over the hyperedge is +1, and the
    # two product classes have exactly n^k/2 tuples each
    for delta in (1.5, 0.5):
        same, cross = _reduced_same_fraction(delta, trials=40, seed0=10_000)
        n_tot = same + cross
        frac = same / n_tot
        band = 3 * sqrt(0.25 / n_tot)  # bound on the binomial SE
        assert abs(frac - delta / 2) <= band, (delta, frac, band)
    same, cross = _reduced_same_fraction(1.0, trials=40, seed0=20_000)
    n_tot = same + cross
    assert abs(same / n_tot - 0.5) <= 3 * sqrt(0.25 / n_tot)


def test_literal_helpers():
    sigma = Labeling(np.array([1, -1, 1], dtype=np.int8))
    lit = as_literal_labeling(sigma)
    assert len(lit) == 6
    assert lit[literal_index(0)] == 1 and lit[literal_index(0, True)] == -1
    assert lit[literal_index(1)] == -1 and lit[literal_index(1, True)] == 1


def test_planting_format_round_trip(tmp_path):
    q = parity_family(3, 0.7)
    path = tmp_path / "q.txt"
    save_planting(q, path)
    back = load_planting(path)
    assert back.k == 3
    assert np.array_equal(back.table, q.table)  # repr round-trips exactly
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n+1 +1 0.5\n+1 -1 0.5\n")
    with pytest.raises(InvalidParameterError):
        load_planting(bad)  # only 2 of 4 mass lines
    bad.write_text("x\n")
    with pytest.raises(InvalidParameterError):
        load_planting(bad)


def test_hypergraph_format_round_trip(tmp_path):
    h = gen_goldreich(9, 2, [1, 0, 1, 0], m=25, seed=8)
    path = tmp_path / "h.txt"
    save_hypergraph(h, path)
    back = load_hypergraph(path)
    assert back.n == 9 and back.k == 2 and back.sigma is None
    assert np.array_equal(back.hyperedges, h.hyperedges)
    assert np.array_equal(back.labels, h.labels)
    plain = filter_positive(h)
    save_hypergraph(plain, path)
    back = load_hypergraph(path)
    assert back.labels is None
    assert np.array_equal(back.hyperedges, plain.hyperedges)
    empty = PlantedHypergraph(n=4, k=2, sigma=None, hyperedges=np.empty((0, 2), dtype=np.int64))
    save_hypergraph(empty, path)
    assert load_hypergraph(path).n_edges == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("phyp 5 2\n1 2\n3 4 1\n")
    with pytest.raises(InvalidParameterError):
        load_hypergraph(bad)  # labels on some lines only
    bad.write_text("5 2\n1 2\n")
    with pytest.raises(InvalidParameterError):
        load_hypergraph(bad)  # missing header
