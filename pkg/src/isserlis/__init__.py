"""Exact Gaussian and isotropic moments by pair-partition sums, with Monte Carlo cross-checks."""

__version__ = "0.1.0"

from .errors import IsserlisError, NumericalError, ValidationError
from .gaussian import (
    CholeskyFactor,
    CovarianceMatrix,
    MomentResult,
    cholesky_factor,
    gaussian_even_moment,
    isserlis_moment,
    load_covariance,
    mc_moment,
    sample_gaussian,
    vector_moment,
)
from .isotropic import (
    IsotropicSampler,
    ck_direction_independence,
    covariance_isotropy_check,
    estimate_ck,
    isotropic_moment,
)
from .montecarlo import RandomStream, StreamingMoments, standard_normals
from .pairings import (
    PairPartition,
    enumerate_pair_partitions,
    pair_partition_count,
    paired_index_tuples,
    pairing_sum,
    render_wick_expansion,
)
from .tensor import (
    DenseTensor,
    evaluate,
    expectation_via_pairings,
    expectation_via_sigma_contraction,
    mc_tensor_expectation,
)
