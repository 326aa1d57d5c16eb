"""Analytic oracles and empirical probes for the spectral machinery.

Everything here is about comparing sampled graphs to their closed-form
expectations: the rank-2 mean of the diagonal-deleted gram matrix, the
spectral norm of the deviation from it, localization of singular vectors
on high-degree coordinates, and degree-tail counts.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Optional

import numpy as np

from . import seeding, spectral
from .errors import InvalidParameterError
from .model import (
    BipartiteGraph,
    Labeling,
    ModelParams,
    as_labeling,
    gen_bipartite_sbm,
    gen_labeling,
)


@dataclasses.dataclass(frozen=True)
class ExpectedSpectrum:
    """Closed-form mean structure of the deleted gram matrix.

    The off-diagonal mean entry is same_label_entry for rows with equal
    labels and cross_label_entry otherwise, which is exactly
    lambda1 J / n1 + lambda2 sigma sigma^T / n1 minus same_label_entry
    on the diagonal (the deletion zeroes it).
    """

    lambda1: float
    lambda2: float
    same_label_entry: float
    cross_label_entry: float


def expected_spectrum(params: ModelParams) -> ExpectedSpectrum:
    n1, n2, p, d = params.n1, params.n2, params.p, params.delta
    base = n2 * p * p
    return ExpectedSpectrum(
        lambda1=n1 * base,
        lambda2=(d - 1.0) ** 2 * n1 * base,
        same_label_entry=base * (d * d - 2.0 * d + 2.0),
        cross_label_entry=base * (2.0 * d - d * d),
    )


def expected_operator(params: ModelParams, sigma) -> spectral.LinearOperatorHandle:
    """The analytic mean lambda1 J/n1 + lambda2 sigma sigma^T/n1 as an operator."""
    sigma = as_labeling(sigma, params.n1)
    spec = expected_spectrum(params)
    n1 = params.n1
    sig = sigma.values.astype(np.float64)

    def apply(x: np.ndarray) -> np.ndarray:
        return (spec.lambda1 / n1) * x.sum() + (spec.lambda2 / n1) * (sig @ x) * sig

    return spectral.LinearOperatorHandle(n1, apply, symmetric=True)


def deviation_operator(g: BipartiteGraph, sigma) -> spectral.LinearOperatorHandle:
    """B minus its closed-form mean, applied matrix-free.

    The mean is the rank-2 form with the same_label_entry identity
    correction for the deleted diagonal; it is never materialized.
    """
    sigma = as_labeling(sigma, g.params.n1)
    base = spectral.deleted_gram_operator(g)
    spec = expected_spectrum(g.params)
    n1 = g.params.n1
    sig = sigma.values.astype(np.float64)

    def apply(x: np.ndarray) -> np.ndarray:
        mean = (
            (spec.lambda1 / n1) * x.sum()
            + (spec.lambda2 / n1) * (sig @ x) * sig
            - spec.same_label_entry * x
        )
        return base.apply(x) - mean

    return spectral.LinearOperatorHandle(n1, apply, symmetric=True)


def _norm_estimate(
    op: spectral.LinearOperatorHandle, iters: int, tol: float, rng: np.random.Generator
) -> float:
    """Best-effort spectral norm by plain power iteration.

    Noise operators have bulk-edge gaps too small for a strict residual
    contract in a fixed budget; the Rayleigh quotient is second-order
    accurate in the residual, so the estimate after `iters` sweeps is
    still good to a few parts per thousand. Stops early below tol.
    """
    v = rng.standard_normal(op.dim)
    nv = float(np.linalg.norm(v))
    if nv == 0.0 or op.dim == 0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(iters):
        w = op.apply(v)
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        nw = float(np.linalg.norm(w))
        if nw < 1e-300:
            return 0.0
        if resid <= tol * max(1.0, abs(lam)):
            break
        v = w / nw
    return abs(lam)


@dataclasses.dataclass(frozen=True)
class NoiseProbeResult:
    """Per-trial deviation norms: ||B - E B|| and ||D_V - E D_V||."""

    b_dev_norms: np.ndarray
    d_dev_norms: np.ndarray


def noise_norm_probe(
    params: ModelParams,
    trials: int,
    seed: int,
    tol: float = 1e-6,
    max_iter: int = 200,
    balanced: bool = False,
) -> NoiseProbeResult:
    """Sample graphs and measure how far B and D_V stray from their means.

    The degree part is exact: E D_V = n2 p I, so its norm is simply
    max |degree - n2 p|. The B part is a power-iteration estimate on the
    matrix-free deviation operator.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if params.n2 * params.p < np.log(max(params.n1, 2)):
        warnings.warn(
            "mean column weight n2 p below log(n1): outside the operating "
            "density of the concentration bounds",
            stacklevel=2,
        )
    b_norms = np.empty(trials)
    d_norms = np.empty(trials)
    for t in range(trials):
        sigma = gen_labeling(params.n1, seed=seeding.mix_seed(seed, "probe-sigma", t), balanced=balanced)
        tau = gen_labeling(params.n2, seed=seeding.mix_seed(seed, "probe-tau", t), balanced=balanced)
        g = gen_bipartite_sbm(params, sigma, tau, seed=seeding.mix_seed(seed, "probe-graph", t))
        dev = deviation_operator(g, sigma)
        rng = seeding.generator(seed, "probe-power", t)
        b_norms[t] = _norm_estimate(dev, max_iter, tol, rng)
        d_norms[t] = float(np.max(np.abs(g.row_degrees - params.n2 * params.p)))
    return NoiseProbeResult(b_dev_norms=b_norms, d_dev_norms=d_norms)


@dataclasses.dataclass(frozen=True)
class LocalizationReport:
    """Weight of the top singular vectors on the high-degree coordinates.

    support_set holds the r largest-degree rows; mass_fractions[i] is the
    squared norm of the i-th left singular vector restricted to it, and
    sigma_correlations[i] is |sigma . v_i| / sqrt(n1).
    """

    r: int
    support_set: np.ndarray
    mass_fractions: np.ndarray
    sigma_correlations: np.ndarray


def localization_report(
    g: BipartiteGraph,
    sigma,
    t: int = 3,
    r: Optional[int] = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> LocalizationReport:
    """Mass of the top-t left singular vectors on the r highest degrees.

    r defaults to floor(n1 / ln n1). The support set is degree-ranked
    (ties resolved to smaller indices), a constructive stand-in for the
    existential high-degree set in the localization statement, so the
    reported mass is a lower bound for it.
    """
    n1 = g.params.n1
    sigma = as_labeling(sigma, n1)
    if r is None:
        r = int(n1 / np.log(n1)) if n1 >= 3 else 1
    if not 1 <= r <= n1:
        raise InvalidParameterError(f"r={r} outside [1, {n1}]")
    if t > max(n1 ** (1.0 / 3.0), 1.0):
        warnings.warn("t above n1^(1/3): outside the stated range", stacklevel=2)
    res = spectral.top_singulars(g, t, tol=tol, max_iter=max_iter, seed=seed)
    order = np.argsort(-g.row_degrees, kind="stable")
    support = np.sort(order[:r])
    mass = np.sum(res.vectors[support, :] ** 2, axis=0)
    corr = np.abs(sigma.values.astype(np.float64) @ res.vectors) / np.sqrt(n1)
    return LocalizationReport(
        r=r, support_set=support, mass_fractions=mass, sigma_correlations=corr
    )


@dataclasses.dataclass(frozen=True)
class DegreeStats:
    """Degree-tail counts against the concentration thresholds.

    Thresholds are n2 p + c sqrt(n2 p ln n1) and the ln ln n1 variant
    (inner logs clamped at 0 for tiny n1).
    """

    max_degree: int
    expected_degree: float
    c: float
    threshold_log: float
    threshold_loglog: float
    count_above_log: int
    count_above_loglog: int

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


def degree_stats(g: BipartiteGraph, c: float = 1.0) -> DegreeStats:
    n1, n2, p = g.params.n1, g.params.n2, g.params.p
    deg = g.row_degrees
    mean = n2 * p
    log_term = max(np.log(n1), 0.0) if n1 >= 1 else 0.0
    loglog_term = max(np.log(max(np.log(n1), 1e-300)), 0.0) if n1 >= 2 else 0.0
    thr_log = mean + c * np.sqrt(mean * log_term)
    thr_loglog = mean + c * np.sqrt(mean * loglog_term)
    return DegreeStats(
        max_degree=int(deg.max()) if deg.size else 0,
        expected_degree=float(mean),
        c=float(c),
        threshold_log=float(thr_log),
        threshold_loglog=float(thr_loglog),
        count_above_log=int(np.sum(deg > thr_log)),
        count_above_loglog=int(np.sum(deg > thr_loglog)),
    )
