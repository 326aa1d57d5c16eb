"""End-to-end acceptance runs at desk scale.

One test per numbered criterion, in order; each prints a single
`[acceptance] criterion N: PASS|FAIL` line (run with -s to stream them).
Sizes, densities, bounds, and seeds are frozen; the density prefactors
and the reduction margin come from the committed calibration data.
Criteria 1 and 2 take minutes; everything else runs in seconds.
"""

import contextlib
import itertools
import json
import math
import time

import numpy as np
import pytest

from bisbm import (
    BroadcastTree,
    DetectionParams,
    HashLabeling,
    Labeling,
    ModelParams,
    TreeParams,
    dd_svd_partition,
    degree_stats,
    expected_spectrum,
    fourier,
    gen_bipartite_sbm,
    gen_labeling,
    gen_planted_hypergraph,
    load_calibration,
    localization_report,
    parity_family,
    reconstruction_variance,
    reduce_to_bipartite,
    root_posterior,
    round_signs,
    sbm_reduction_detect,
    svd_partition,
    top_eigs,
    top_singulars,
)
from bisbm.analysis import expected_operator
from bisbm.cli import main as cli_main
from bisbm.planting import fourier_coefficient
from bisbm.seeding import generator, mix_seed

CAL = load_calibration()


@contextlib.contextmanager
def criterion(n: int):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {n}: FAIL", flush=True)
        raise
    print(
        f"[acceptance] criterion {n}: PASS ({time.monotonic() - start:.1f}s)",
        flush=True,
    )


def planted_instance(n1, n2, p, delta, seed, t, implicit_tau=False):
    sigma = gen_labeling(n1, seed=mix_seed(seed, "sigma", t))
    if implicit_tau:
        tau = HashLabeling(n2, seed=mix_seed(seed, "tau", t))
    else:
        tau = gen_labeling(n2, seed=mix_seed(seed, "tau", t))
    g = gen_bipartite_sbm(
        ModelParams(n1, n2, p, delta), sigma, tau, seed=mix_seed(seed, "graph", t)
    )
    return g, sigma


def test_criterion_01_detection_transition():
    with criterion(1):
        start = time.monotonic()
        n1, n2, delta = 2000, 200_000, 0.2
        thr = (delta - 1.0) ** -2 / math.sqrt(n1 * n2)
        dp = DetectionParams(epsilon=CAL["epsilon"], delta_hat=delta)

        def mean_overlap(p, seed):
            ovs = []
            for t in range(20):
                g, sigma = planted_instance(n1, n2, p, delta, seed, t)
                out = sbm_reduction_detect(
                    g, dp, sigma=sigma, seed=mix_seed(seed, "solve", t)
                )
                ovs.append(out.overlap)
            return float(np.mean(ovs))

        above = mean_overlap(2.0 * thr, 101)
        below = mean_overlap(0.5 * thr, 102)
        elapsed = time.monotonic() - start
        assert above >= 0.55, above
        assert below <= 0.53, below
        assert elapsed <= 600.0, elapsed


@pytest.fixture(scope="module")
def spectral_separation_runs():
    """Shared instances for criteria 2 and 4: ten draws at half the plain-SVD
    density with implicit columns, solved by both partitioners and localized.

    The raw-biadjacency solves run at tol=1e-4: localization pins the top
    singular values near integer row degrees, so deep pairs can be nearly
    tied and a 1e-8 residual is unreachable; 1e-4 is still a ~6e-8 relative
    residual at this scale and leaves the overlap/mass statistics unchanged.
    Diagonal deletion keeps the strict default, its gaps are wide open.
    """
    n1, n2, delta = 400, 400**3, 0.2
    p = 0.5 * n1 ** (-2.0 / 3.0) * n2 ** (-1.0 / 3.0)
    start = time.monotonic()
    runs = []
    for t in range(10):
        g, sigma = planted_instance(n1, n2, p, delta, 201, t, implicit_tau=True)
        dd = dd_svd_partition(g, sigma=sigma, seed=mix_seed(201, "solve", t))
        sv = svd_partition(g, sigma=sigma, tol=1e-4, seed=mix_seed(201, "solve", t))
        rep = localization_report(g, sigma, t=3, tol=1e-4, seed=mix_seed(201, "loc", t))
        runs.append((dd.overlap, sv.overlap, rep))
    return runs, time.monotonic() - start


def test_criterion_02_spectral_separation(spectral_separation_runs):
    with criterion(2):
        runs, elapsed = spectral_separation_runs
        dd_mean = float(np.mean([r[0] for r in runs]))
        sv_mean = float(np.mean([r[1] for r in runs]))
        assert dd_mean >= 0.85, dd_mean
        assert sv_mean <= 0.6, sv_mean
        assert elapsed <= 900.0, elapsed


def test_criterion_03_dd_recovery_at_own_threshold():
    with criterion(3):
        n1, n2, delta = 200, 200 * 256, 0.2
        p = CAL["C_dd"] * math.log(n1) / math.sqrt(n1 * n2)
        ovs = []
        for t in range(10):
            g, sigma = planted_instance(n1, n2, p, delta, 301, t)
            ovs.append(dd_svd_partition(g, sigma=sigma, seed=mix_seed(301, "solve", t)).overlap)
        assert float(np.mean(ovs)) >= 0.9, ovs


def test_criterion_04_localization(spectral_separation_runs):
    with criterion(4):
        runs, _ = spectral_separation_runs
        reps = [r[2] for r in runs]
        assert all(rep.r == int(400 / math.log(400)) for rep in reps)
        mass = float(np.mean([m for rep in reps for m in rep.mass_fractions]))
        corr2 = float(np.mean([rep.sigma_correlations[1] for rep in reps]))
        assert mass >= 0.7, mass
        assert corr2 <= 0.3, corr2


def test_criterion_05_rank2_expectation_oracle():
    with criterion(5):
        params = ModelParams(4, 10, 0.1, 2.0)
        sigma = Labeling(np.array([1, 1, -1, -1], dtype=np.int8))
        trials = 100_000
        s1 = np.zeros((4, 4))
        s2 = np.zeros((4, 4))
        for t in range(trials):
            tau = gen_labeling(10, seed=mix_seed(501, "tau", t))
            g = gen_bipartite_sbm(params, sigma, tau, seed=mix_seed(501, "graph", t))
            m = g.to_dense()
            b = m @ m.T
            np.fill_diagonal(b, 0.0)
            s1 += b
            s2 += b * b
        mean = s1 / trials
        se = np.sqrt(np.maximum(s2 / trials - mean**2, 0.0) / trials)
        spec = expected_spectrum(params)
        assert spec.same_label_entry == pytest.approx(0.2, abs=1e-15)
        assert spec.cross_label_entry == pytest.approx(0.0, abs=1e-15)
        sv = sigma.values.astype(np.float64)
        target = np.where(
            np.equal.outer(sv, sv), spec.same_label_entry, spec.cross_label_entry
        )
        np.fill_diagonal(target, 0.0)
        off = ~np.eye(4, dtype=bool)
        assert np.all(np.abs(mean - target)[off] <= 3.0 * se[off] + 1e-12)
        assert np.all(mean[np.eye(4, dtype=bool)] == 0.0)

        # the analytic rank-2 operator: at delta=2 both eigenvalues equal
        # 0.4 and the eigenspace is span{all-ones, sigma}, so values are
        # compared directly and vectors through the spectral projector
        res = top_eigs(expected_operator(params, sigma), 2, tol=1e-12, seed=1)
        assert np.max(np.abs(res.values - 0.4)) <= 1e-8
        proj = res.vectors @ res.vectors.T
        ones = np.full(4, 0.5)
        target_proj = np.outer(ones, ones) + np.outer(sv / 2.0, sv / 2.0)
        assert np.max(np.abs(proj - target_proj)) <= 1e-8


def test_criterion_06_rounding_inequality():
    with criterion(6):
        rng = generator(601, "round")
        for trial in range(1000):
            n = int(rng.integers(1, 64))
            x = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
            style = trial % 4
            if style == 0:
                y = rng.normal(size=n)
            elif style == 1:
                y = x / math.sqrt(n) + rng.normal(scale=0.3, size=n)
            elif style == 2:
                y = rng.normal(size=n)
                y[rng.random(n) < 0.3] = 0.0
            else:
                y = -x / math.sqrt(n) + rng.normal(scale=0.05, size=n)
            norm = float(np.linalg.norm(y))
            y = x / math.sqrt(n) if norm == 0.0 else y / norm
            ham = int(np.count_nonzero(round_signs(y).values != x))
            bound = n * float(np.sum((x / math.sqrt(n) - y) ** 2))
            # 1e-9 absorbs float rounding at the y_i=0 equality boundary;
            # the mathematical inequality itself has no slack
            assert ham <= bound + 1e-9, (trial, ham, bound)


def test_criterion_07_spectral_engine_oracle():
    with criterion(7):
        accepted = 0
        attempt = 0
        while accepted < 100:
            assert attempt < 500, "too many degenerate draws rejected"
            attempt += 1
            rng = generator(701, "inst", attempt)
            n1 = int(rng.integers(2, 13))
            n2 = int(rng.integers(2, 25))
            p = float(rng.uniform(0.05, 0.5))
            delta = float(rng.uniform(0.0, 2.0))
            g, _ = planted_instance(n1, n2, p, delta, 702, attempt)
            s_count = min(3, n1, n2)
            u, s, _ = np.linalg.svd(g.to_dense())
            svals = np.concatenate([s, [0.0]])
            # vector comparison is only well-posed away from degeneracies;
            # draws with tiny values or closed gaps are skipped
            # deterministically
            if (
                svals[s_count - 1] <= 1e-6
                or np.min(svals[:s_count] - svals[1 : s_count + 1]) <= 1e-3 * svals[0]
            ):
                continue
            res = top_singulars(g, s_count, tol=1e-10, max_iter=50_000, seed=7)
            assert np.max(np.abs(res.values - s[:s_count])) <= 1e-6 * max(1.0, s[0])
            for i in range(s_count):
                ui = u[:, i]
                vi = res.vectors[:, i]
                sign = 1.0 if float(ui @ vi) >= 0.0 else -1.0
                assert float(np.linalg.norm(sign * vi - ui)) <= 1e-6
            accepted += 1


def test_criterion_08_tree_transition():
    with criterion(8):
        delta = 0.2
        signal = (delta - 1.0) ** 2
        below = reconstruction_variance(
            TreeParams(d=0.8 / signal, delta=delta, R=6, trials=1000), seed=801
        )
        above = reconstruction_variance(
            TreeParams(d=1.5 / signal, delta=delta, R=6, trials=1000), seed=802
        )
        assert below.var_mean >= 0.9, below
        assert above.var_mean <= 0.8, above

        # depth-1 stars against direct likelihood enumeration: leaf labels
        # are observed, so the posterior is a two-term product ratio
        for delta_s in (0.2, 0.5, 1.5):
            for c in range(1, 7):
                for tau in itertools.product((1, -1), repeat=c):
                    tree = BroadcastTree(
                        params=TreeParams(d=1.0, delta=delta_s, R=1),
                        sigma_layers=[
                            np.array([1], dtype=np.int8),
                            np.ones(c, dtype=np.int8),
                        ],
                        tau_layers=[np.array(tau, dtype=np.int8)],
                        parents=[np.zeros(c, dtype=np.int64)],
                    )
                    lp = lm = 1.0
                    for t_i in tau:
                        lp *= delta_s / 2.0 if t_i == 1 else 1.0 - delta_s / 2.0
                        lm *= delta_s / 2.0 if t_i == -1 else 1.0 - delta_s / 2.0
                    assert abs(root_posterior(tree) - lp / (lp + lm)) <= 1e-12


def test_criterion_09_reduction_identity():
    with criterion(9):
        for delta in (0.2, 0.5, 1.5):
            q = parity_family(3, delta)
            coef = fourier_coefficient(q, range(3))
            assert abs(1.0 + 2.0**3 * coef - delta) <= 1e-12

        for di, delta in enumerate((0.2, 0.5, 1.5)):
            q = parity_family(3, delta)
            same = cross = 0
            for t in range(30):
                idx = 30 * di + t
                sigma = gen_labeling(40, seed=mix_seed(901, "sigma", idx), balanced=True)
                h = gen_planted_hypergraph(
                    40, q, 0.02, seed=mix_seed(901, "hyper", idx), sigma=sigma
                )
                red = reduce_to_bipartite(h, s=range(3), seed=mix_seed(901, "reduce", idx))
                taus = np.prod(sigma.take(red.codec.decode(red.raw_edges[:, 1])), axis=1)
                agree = sigma.take(red.raw_edges[:, 0]) == taus
                same += int(np.sum(agree))
                cross += int(np.sum(~agree))
            total = same + cross
            band = 3.0 * math.sqrt(0.25 / total)
            assert abs(same / total - delta / 2.0) <= band, (delta, same / total, band)


def test_criterion_10_manifest_determinism(tmp_path):
    with criterion(10):
        manifests = [
            {"kind": "generate", "seed": 41, "n1": 40, "n2": 200, "delta": 0.3,
             "p": 0.05},
            {"kind": "partition", "seed": 42, "trials": 2, "n1": 40, "n2": 400,
             "delta": 0.3, "p": 0.1, "algorithm": "dd"},
            {"kind": "sweep", "seed": 43, "trials": 2, "n1": 24, "n2": 480,
             "delta": 0.25, "threshold": "dd", "grid": "0.5,2",
             "algorithms": "svd,dd"},
            {"kind": "localize", "seed": 44, "trials": 2, "n1": 30, "n2": 300,
             "delta": 0.5, "p": 0.15, "t": 2},
            {"kind": "treesim", "seed": 45, "trials": 100, "d": "1.25,2.5",
             "delta": 0.2, "R": 4},
            {"kind": "probe", "seed": 46, "trials": 3, "probe": "degree",
             "n1": 50, "n2": 500, "delta": 1.0, "p": 0.05},
            {"kind": "probe", "seed": 47, "trials": 2, "probe": "noise",
             "n1": 20, "n2": 100, "delta": 1.0, "p": 0.2},
        ]
        for idx, doc in enumerate(manifests):
            mf = tmp_path / f"m{idx}.json"
            mf.write_text(json.dumps(doc))
            out = tmp_path / f"run{idx}"
            args = [doc["kind"], "--manifest", str(mf), "--out", str(out)]
            if doc["kind"] == "sweep":
                args += ["--jobs", "2"]
            assert cli_main(args) == 0
            first = {f.name: f.read_bytes() for f in out.iterdir()}
            assert cli_main(args) == 0
            second = {f.name: f.read_bytes() for f in out.iterdir()}
            assert first == second, doc["kind"]
