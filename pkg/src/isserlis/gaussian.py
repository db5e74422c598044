"""Mean-zero multivariate normal distributions and their exact moments."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .montecarlo import StreamingMoments, shard_map, sharded_normals
from .pairings import as_int, pair_partition_count, pairing_sum

__all__ = [
    "PSD_TOL",
    "CovarianceMatrix",
    "CholeskyFactor",
    "MomentResult",
    "load_covariance",
    "read_covariance",
    "read_factor",
    "cholesky_factor",
    "isserlis_moment",
    "vector_moment",
    "gaussian_even_moment",
    "sample_gaussian",
    "mc_moment",
]

PSD_TOL = 1e-10
FACTOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """A validated symmetric positive semidefinite ``d x d`` matrix."""

    sigma: np.ndarray

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def to_json(self) -> dict:
        return {"dim": self.dim, "sigma": self.sigma.tolist()}

    @classmethod
    def from_json(cls, data) -> "CovarianceMatrix":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            dim, sigma = data["dim"], data["sigma"]
        except (KeyError, TypeError):
            raise ValidationError('covariance JSON needs "dim" and "sigma"') from None
        cov = load_covariance(sigma)
        if cov.dim != dim:
            raise ValidationError(f'"dim" is {dim} but "sigma" is {cov.dim}x{cov.dim}')
        return cov


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """A matrix ``A`` with ``A @ A.T`` equal to a covariance matrix.

    The columns ``a_1, ..., a_d`` of ``A`` are what the tensor-expectation
    formula evaluates the tensor on.
    """

    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def columns(self) -> list[np.ndarray]:
        return [self.matrix[:, i] for i in range(self.matrix.shape[1])]

    def covariance(self) -> np.ndarray:
        return self.matrix @ self.matrix.T

    def to_json(self) -> dict:
        return {"dim": self.dim, "factor": self.matrix.tolist()}

    @classmethod
    def from_json(cls, data) -> "CholeskyFactor":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            dim, rows = data["dim"], data["factor"]
        except (KeyError, TypeError):
            raise ValidationError('factor JSON needs "dim" and "factor"') from None
        a = _as_matrix(rows, "factor")
        if a.shape != (dim, dim):
            raise ValidationError(f'"factor" must be {dim}x{dim}, got {a.shape}')
        return cls(a)


@dataclass(frozen=True)
class MomentResult:
    value: float
    provenance: str  # "analytic" | "monte-carlo"
    samples: int | None = None
    stderr: float | None = None

    def __post_init__(self):
        if self.provenance not in ("analytic", "monte-carlo"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if (self.stderr is not None) != (self.provenance == "monte-carlo"):
            raise ValidationError("stderr is reported exactly for monte-carlo results")

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "provenance": self.provenance,
            "samples": self.samples,
            "stderr": self.stderr,
        }

    @classmethod
    def analytic(cls, value: float) -> "MomentResult":
        return cls(float(value), "analytic")


def _as_matrix(matrix, what: str) -> np.ndarray:
    try:
        a = np.array(matrix, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} is not a numeric matrix") from None
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} has non-finite entries")
    return a


def _psd_scale(eigs: np.ndarray) -> float:
    return PSD_TOL * max(1.0, float(np.max(np.abs(eigs), initial=0.0)))


def load_covariance(matrix) -> CovarianceMatrix:
    """Symmetrize ``matrix`` and check it is positive semidefinite.

    The smallest eigenvalue may dip to ``-1e-10 * max(1, spectral norm)``
    to absorb rounding noise in covariance files.
    """
    a = _as_matrix(matrix, "covariance")
    sym = (a + a.T) / 2
    if sym.size:
        eigs = np.linalg.eigvalsh(sym)
        if eigs[0] < -_psd_scale(eigs):
            raise ValidationError(
                f"covariance is not positive semidefinite: smallest eigenvalue {eigs[0]:.6g}"
            )
    sym.setflags(write=False)
    return CovarianceMatrix(sym)


def cholesky_factor(cov: CovarianceMatrix) -> CholeskyFactor:
    """Factor ``cov`` as ``A @ A.T``.

    Positive definite input gets the lower-triangular Cholesky factor.
    When some eigenvalue is within the PSD tolerance of zero, ``A`` is
    ``U @ diag(sqrt(max(lam, 0)))`` from the symmetric eigendecomposition.
    """
    sigma = cov.sigma
    d = sigma.shape[0]
    if d == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    lam, u = np.linalg.eigh(sigma)
    tol = _psd_scale(lam)
    if lam[0] < -tol:
        raise ValidationError(f"covariance is not positive semidefinite: smallest eigenvalue {lam[0]:.6g}")
    a = None
    if lam[0] > tol:
        try:
            a = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            a = None
    if a is None:
        a = u * np.sqrt(np.clip(lam, 0.0, None))
    resid = np.max(np.abs(a @ a.T - sigma))
    if resid > FACTOR_TOL * max(1.0, float(np.max(np.abs(sigma)))):
        raise NumericalError(f"factorization residual {resid:.3g} exceeds tolerance")
    a.setflags(write=False)
    return CholeskyFactor(a)


def read_covariance(path) -> CovarianceMatrix:
    return CovarianceMatrix.from_json(_read_json(path))


def read_factor(path) -> CholeskyFactor:
    return CholeskyFactor.from_json(_read_json(path))


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def _zero_based(indices: Sequence[int], d: int) -> list[int]:
    idx = []
    for i in indices:
        i = as_int(i)
        if not 1 <= i <= d:
            raise ValidationError(f"index {i} out of range 1..{d}")
        idx.append(i - 1)
    return idx


def isserlis_moment(cov: CovarianceMatrix, indices: Sequence[int], threads: int = 1) -> MomentResult:
    """``E(Y_{i_1} ... Y_{i_n})`` for ``Y ~ N(0, cov)``; indices are 1-based and may repeat.

    Sums the products of covariance entries over all pair partitions of the
    ``n`` positions with compensated summation.  Odd ``n`` returns 0 without
    enumerating anything.
    """
    idx = _zero_based(indices, cov.dim)
    if len(idx) % 2:
        return MomentResult.analytic(0.0)
    weights = cov.sigma[np.ix_(idx, idx)]
    return MomentResult.analytic(pairing_sum(weights, threads=threads))


def _as_vectors(vectors, d: int | None = None) -> np.ndarray:
    try:
        v = np.array(vectors, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError("vectors must be a list of equal-length numeric vectors") from None
    if v.size == 0 and v.ndim == 1:
        v = v.reshape(0, d or 0)
    if v.ndim != 2:
        raise ValidationError("vectors must be a list of equal-length numeric vectors")
    if d is not None and v.shape[1] != d:
        raise ValidationError(f"vectors have dimension {v.shape[1]}, expected {d}")
    return v


def vector_moment(cov: CovarianceMatrix, vectors, threads: int = 1) -> MomentResult:
    """``E(a_1.Y ... a_n.Y)`` for ``Y ~ N(0, cov)``.

    The pair weight for ``(l, r)`` is ``a_l @ cov @ a_r``.
    """
    a = _as_vectors(vectors, cov.dim)
    if a.shape[0] % 2:
        return MomentResult.analytic(0.0)
    gram = a @ cov.sigma @ a.T
    return MomentResult.analytic(pairing_sum(gram, threads=threads))


def gaussian_even_moment(k: int) -> int:
    """``E(X**(2k)) = (2k)! / (2**k k!)`` for a standard normal ``X``, as an exact int."""
    k = as_int(k)
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    return pair_partition_count(2 * k)


def sample_gaussian(factor: CholeskyFactor, seed: int, count: int, threads: int = 1) -> np.ndarray:
    """``count`` draws of ``A @ z`` with ``z`` standard normal, as a ``(count, d)`` array.

    Deterministic in ``seed``; a shorter draw is a prefix of a longer one.
    """
    count = as_int(count)
    if count < 1:
        raise ValidationError(f"count must be positive, got {count}")
    a = factor.matrix
    d = a.shape[0]
    blocks = shard_map(lambda s, lo, hi: sharded_normals(seed, s, hi - lo, d) @ a.T, count, threads)
    return np.concatenate(blocks, axis=0)


def mc_moment(
    factor: CholeskyFactor,
    indices: Sequence[int],
    seed: int,
    samples: int,
    threads: int = 1,
) -> MomentResult:
    """Monte Carlo estimate of ``E(Y_{i_1} ... Y_{i_n})`` with batch-means stderr."""
    idx = _zero_based(indices, factor.dim)
    samples = as_int(samples)
    a = factor.matrix
    d = a.shape[0]

    def shard(s, lo, hi):
        y = sharded_normals(seed, s, hi - lo, d) @ a.T
        return StreamingMoments.from_values(np.prod(y[:, idx], axis=1))

    return _summarize(shard_map(shard, samples, threads))


def _summarize(parts: list[StreamingMoments]) -> MomentResult:
    total = StreamingMoments()
    for part in parts:
        total.merge(part)
    return MomentResult(total.mean, "monte-carlo", samples=total.count, stderr=total.stderr())
