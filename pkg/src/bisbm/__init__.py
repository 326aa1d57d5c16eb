"""Two-block bipartite graphs: generation, spectral partitioning, planted-CSP
reductions, and broadcast-tree reconstruction experiments."""

from .analysis import (
    DegreeStats,
    ExpectedSpectrum,
    LocalizationReport,
    NoiseProbeResult,
    degree_stats,
    expected_spectrum,
    localization_report,
    noise_norm_probe,
)
from .calibration import load_calibration
from .errors import (
    BisbmError,
    ConvergenceError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    InvalidParameterError,
    NoSignalError,
    SizeGuardError,
)
from .estimators import (
    DiagonalDeletionBipartitioner,
    ReductionDetector,
    SVDBipartitioner,
    biadjacency_graph,
)
from .model import (
    BipartiteGraph,
    HashLabeling,
    Labeling,
    ModelParams,
    as_labeling,
    gen_bipartite_sbm,
    gen_labeling,
    load_graph,
    load_labeling,
    save_graph,
    save_labeling,
)
from .partition import (
    DetectionParams,
    PartitionOutcome,
    SparsifyResult,
    dd_svd_partition,
    overlap,
    project_degree2,
    round_signs,
    sbm_reduction_detect,
    sparsify,
    svd_partition,
)
from .planting import (
    FourierReport,
    PlantedHypergraph,
    PlantingFunction,
    ReducedGraph,
    fourier,
    gen_goldreich,
    gen_planted_hypergraph,
    parity_family,
    reduce_to_bipartite,
)
from .spectral import (
    LinearOperatorHandle,
    SimpleGraph,
    SpectralResult,
    deleted_gram_operator,
    gram_operator,
    nb_partition,
    nonbacktracking_operator,
    top_eigs,
    top_singulars,
)
from .treesim import (
    BroadcastTree,
    TreeParams,
    VarianceEstimate,
    reconstruction_variance,
    root_log_odds,
    root_posterior,
    sample_tree,
)

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "BisbmError",
    "BroadcastTree",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "DegreeStats",
    "DetectionParams",
    "DiagonalDeletionBipartitioner",
    "DimensionMismatchError",
    "ExpectedSpectrum",
    "FourierReport",
    "HashLabeling",
    "InvalidParameterError",
    "Labeling",
    "LinearOperatorHandle",
    "LocalizationReport",
    "ModelParams",
    "NoSignalError",
    "NoiseProbeResult",
    "PartitionOutcome",
    "PlantedHypergraph",
    "PlantingFunction",
    "ReducedGraph",
    "ReductionDetector",
    "SVDBipartitioner",
    "SimpleGraph",
    "SizeGuardError",
    "SparsifyResult",
    "SpectralResult",
    "TreeParams",
    "VarianceEstimate",
    "as_labeling",
    "biadjacency_graph",
    "dd_svd_partition",
    "degree_stats",
    "deleted_gram_operator",
    "expected_spectrum",
    "fourier",
    "gen_bipartite_sbm",
    "gen_goldreich",
    "gen_labeling",
    "gen_planted_hypergraph",
    "gram_operator",
    "load_calibration",
    "load_graph",
    "load_labeling",
    "localization_report",
    "nb_partition",
    "noise_norm_probe",
    "nonbacktracking_operator",
    "overlap",
    "parity_family",
    "project_degree2",
    "reconstruction_variance",
    "reduce_to_bipartite",
    "root_log_odds",
    "root_posterior",
    "round_signs",
    "sample_tree",
    "save_graph",
    "save_labeling",
    "sbm_reduction_detect",
    "sparsify",
    "svd_partition",
    "top_eigs",
    "top_singulars",
]
