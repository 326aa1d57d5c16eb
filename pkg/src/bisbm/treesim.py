"""Two-type broadcast trees with exact root inference.

The tree alternates types: a type-1 node gets a Poisson(d^2) batch of
type-2 children and every type-2 node gets exactly one type-1 child, so
each type-2 layer is in bijection with the next type-1 generation and
both can live in flat arrays sharing indices. Labels flip independently
along every edge with agreement probability delta/2. Depth is counted in
two-step generations (type-1 to type-1).
"""

from __future__ import annotations

import dataclasses
import math
from typing import List

import numpy as np

from . import seeding
from .errors import InvalidParameterError, SizeGuardError

_CLAMP = 60.0
_MAX_EXPECTED_BOUNDARY = 1e7


@dataclasses.dataclass(frozen=True)
class TreeParams:
    """Branching parameter d, agreement parameter delta, depth R, trials.

    d plays the role of p sqrt(n1 n2) in the graph model; the
    reconstruction boundary is (delta-1)^2 d = 1.
    """

    d: float
    delta: float
    R: int
    trials: int = 1

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidParameterError(f"d={self.d} must be positive")
        if not 0.0 <= self.delta <= 2.0:
            raise InvalidParameterError(f"delta={self.delta} outside [0, 2]")
        if self.R < 1:
            raise InvalidParameterError(f"R={self.R} must be >= 1")
        if self.trials < 1:
            raise InvalidParameterError(f"trials={self.trials} must be >= 1")

    def signal_strength(self) -> float:
        """(delta-1)^2 d, the quantity whose comparison to 1 decides
        reconstruction."""
        return (self.delta - 1.0) ** 2 * self.d


@dataclasses.dataclass(frozen=True)
class BroadcastTree:
    """One sampled tree with all labels.

    sigma_layers[g] holds the type-1 labels of generation g (generation 0
    is the root alone). tau_layers[r] and parents[r] describe the type-2
    layer between generations r and r+1: entry i is the label of a type-2
    node whose parent is sigma_layers[r][parents[r][i]] and whose single
    type-1 child is sigma_layers[r+1][i].
    """

    params: TreeParams
    sigma_layers: List[np.ndarray]
    tau_layers: List[np.ndarray]
    parents: List[np.ndarray]

    def __post_init__(self):
        if len(self.sigma_layers) != self.params.R + 1:
            raise InvalidParameterError("need R+1 type-1 generations")
        if len(self.tau_layers) != self.params.R or len(self.parents) != self.params.R:
            raise InvalidParameterError("need R type-2 layers")
        if len(self.sigma_layers[0]) != 1:
            raise InvalidParameterError("generation 0 must be the root alone")
        for r in range(self.params.R):
            n2 = len(self.tau_layers[r])
            if len(self.parents[r]) != n2 or len(self.sigma_layers[r + 1]) != n2:
                raise InvalidParameterError(
                    f"layer {r}: type-2 nodes, parents, and children must align"
                )

    @property
    def root_label(self) -> int:
        return int(self.sigma_layers[0][0])

    @property
    def boundary_size(self) -> int:
        return len(self.sigma_layers[-1])

    @property
    def n_nodes(self) -> int:
        return sum(len(a) for a in self.sigma_layers) + sum(
            len(a) for a in self.tau_layers
        )


def sample_tree(tp: TreeParams, seed) -> BroadcastTree:
    """Sample one broadcast tree of depth R two-step generations.

    The root label is uniform; every child label agrees with its parent
    with probability delta/2 independently. Extinct lineages simply leave
    the deeper layers empty.
    """
    if 2 * tp.R * math.log(tp.d) > math.log(_MAX_EXPECTED_BOUNDARY):
        raise SizeGuardError(
            f"expected boundary d^(2R) = {tp.d ** (2 * tp.R):.3g} exceeds "
            f"{_MAX_EXPECTED_BOUNDARY:.0e}"
        )
    rng = seeding.generator(seed, "tree")
    agree = tp.delta / 2.0
    root = np.array([1 if rng.random() < 0.5 else -1], dtype=np.int8)
    sigma_layers = [root]
    tau_layers = []
    parents = []
    for _ in range(tp.R):
        gen = sigma_layers[-1]
        counts = rng.poisson(tp.d * tp.d, size=len(gen)) if len(gen) else np.zeros(0, dtype=np.int64)
        par = np.repeat(np.arange(len(gen)), counts)
        total = len(par)
        flip2 = rng.random(total) >= agree
        tau = np.where(flip2, -gen[par], gen[par]).astype(np.int8)
        flip1 = rng.random(total) >= agree
        child = np.where(flip1, -tau, tau).astype(np.int8)
        tau_layers.append(tau)
        parents.append(par)
        sigma_layers.append(child)
    return BroadcastTree(
        params=tp, sigma_layers=sigma_layers, tau_layers=tau_layers, parents=parents
    )


def root_log_odds(tree: BroadcastTree) -> float:
    """Exact log-odds of root = +1 given the deepest labels.

    Observed: the last type-2 layer and the last type-1 generation; all
    interior labels are hidden. A deepest type-2 node contributes
    tau * ln(delta/(2-delta)) to its parent (its observed child adds a
    factor independent of the parent, which cancels). A hidden type-2 hop
    composes two flip channels: 2 atanh((delta-1)^2 tanh(lam/2)). Every
    step is an odd function of the labels, so flipping the whole boundary
    negates the result exactly.
    """
    tp = tree.params
    d = tp.delta
    if d <= 0.0:
        direct = -_CLAMP
    elif d >= 2.0:
        direct = _CLAMP
    else:
        direct = float(np.clip(math.log(d / (2.0 - d)), -_CLAMP, _CLAMP))
    two_hop = (d - 1.0) ** 2
    atanh_cap = 1.0 - 1e-16

    msgs = tree.tau_layers[-1].astype(np.float64) * direct
    lam = np.bincount(
        tree.parents[-1], weights=msgs, minlength=len(tree.sigma_layers[tp.R - 1])
    )
    for r in range(tp.R - 2, -1, -1):
        lam = np.clip(lam, -_CLAMP, _CLAMP)
        arg = np.clip(two_hop * np.tanh(0.5 * lam), -atanh_cap, atanh_cap)
        msgs = 2.0 * np.arctanh(arg)
        lam = np.bincount(
            tree.parents[r], weights=msgs, minlength=len(tree.sigma_layers[r])
        )
    return float(np.clip(lam[0], -_CLAMP, _CLAMP))


def root_posterior(tree: BroadcastTree) -> float:
    """P(root = +1 | deepest type-2 and type-1 labels)."""
    lam = root_log_odds(tree)
    if lam >= 0:
        return 1.0 / (1.0 + math.exp(-lam))
    e = math.exp(lam)
    return e / (1.0 + e)


@dataclasses.dataclass(frozen=True)
class VarianceEstimate:
    """Monte Carlo estimate of the conditional variance of the root label."""

    d: float
    delta: float
    R: int
    trials: int
    var_mean: float
    var_stderr: float

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


def reconstruction_variance(tp: TreeParams, seed) -> VarianceEstimate:
    """Mean of 4 q (1-q) over sampled trees, q the exact root posterior.

    A +-1 variable with P(+1) = q has variance 1 - (2q-1)^2 = 4q(1-q);
    values near 1 mean the boundary says nothing about the root.
    """
    vals = np.empty(tp.trials)
    for t in range(tp.trials):
        tree = sample_tree(tp, seed=seeding.mix_seed(seed, "tree-trial", t))
        q = root_posterior(tree)
        vals[t] = 4.0 * q * (1.0 - q)
    stderr = float(vals.std(ddof=1) / math.sqrt(tp.trials)) if tp.trials > 1 else 0.0
    return VarianceEstimate(
        d=tp.d,
        delta=tp.delta,
        R=tp.R,
        trials=tp.trials,
        var_mean=float(vals.mean()),
        var_stderr=stderr,
    )
