"""Rotation-invariant random vectors and their moments.

For an isotropic ``X`` in R^d the second moment matrix is ``lam * I`` and
every n-point moment ``E(a_1.X ... a_n.X)`` is ``c_k`` times the Gaussian
pairing sum built from ``lam * (a_l . a_r)``, where

    c_k = 2**k k! / (2k)! * E(X_a**(2k)) / E(X_a**2)**k,   X_a = a.X,

does not depend on the direction ``a``.  Gaussians have ``c_k = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .gaussian import MomentResult, _as_vectors
from .montecarlo import BATCHES, batch_stderr, shard_map, sharded_normals, sharded_uniforms
from .pairings import as_int, pair_partition_count, pairing_sum

__all__ = [
    "DISTRIBUTIONS",
    "IsotropicSampler",
    "AnisotropicSampler",
    "IsotropyReport",
    "CkEstimate",
    "DirectionReport",
    "parse_dist",
    "random_orthogonal",
    "estimate_ck",
    "ck_direction_independence",
    "covariance_isotropy_check",
    "isotropic_moment",
]

DISTRIBUTIONS = ("std-gaussian", "sphere", "ball")


def parse_dist(spec: str) -> tuple[str, float]:
    """Parse ``std-gaussian``, ``sphere:R`` or ``ball:R`` into ``(name, radius)``."""
    name, _, arg = spec.partition(":")
    if name == "std-gaussian":
        if arg:
            raise ValidationError("std-gaussian takes no radius")
        return name, 1.0
    if name in ("sphere", "ball"):
        try:
            radius = float(arg) if arg else 1.0
        except ValueError:
            raise ValidationError(f"bad radius in {spec!r}") from None
        if not radius >= 0 or not math.isfinite(radius):
            raise ValidationError(f"radius must be a finite non-negative number, got {arg!r}")
        return name, radius
    raise ValidationError(f"unknown distribution {spec!r}; use std-gaussian, sphere:R or ball:R")


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal ``d x d`` matrix: QR of a Gaussian matrix, R's diagonal made positive."""
    g = sharded_normals(seed, 0, d, d, channel=7)
    q, r = np.linalg.qr(g)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class IsotropicSampler:
    """A seeded generator of isotropic vectors in R^dim.

    ``sphere`` and ``ball`` normalize a Gaussian direction; the ball radius
    is ``radius * u**(1/dim)``.  ``rotation``, when set, is applied to every
    draw (used to test rotation invariance empirically).
    """

    name: str
    dim: int
    seed: int
    radius: float = 1.0
    rotation: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.name not in DISTRIBUTIONS:
            raise ValidationError(f"unknown distribution {self.name!r}")
        if as_int(self.dim) < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        if not self.radius >= 0:
            raise ValidationError(f"radius must be non-negative, got {self.radius}")

    @classmethod
    def from_spec(cls, spec: str, dim: int, seed: int) -> "IsotropicSampler":
        name, radius = parse_dist(spec)
        return cls(name, dim, seed, radius)

    def rotated(self, q: np.ndarray) -> "IsotropicSampler":
        return replace(self, rotation=np.asarray(q, dtype=np.float64))

    def _block(self, s: int, rows: int) -> np.ndarray:
        z = sharded_normals(self.seed, s, rows, self.dim)
        if self.name == "std-gaussian":
            x = z
        else:
            x = z / np.linalg.norm(z, axis=1, keepdims=True)
            r = self.radius
            if self.name == "ball":
                r = r * sharded_uniforms(self.seed, s, rows) ** (1.0 / self.dim)
                x = x * r[:, None]
            else:
                x = x * r
        if self.rotation is not None:
            x = x @ self.rotation.T
        return x

    def draw(self, count: int, threads: int = 1) -> np.ndarray:
        blocks = shard_map(lambda s, lo, hi: self._block(s, hi - lo), count, threads)
        return np.concatenate(blocks, axis=0)

    def exact_lambda(self) -> float:
        """``E(X X^T) = lambda * I``."""
        if self.name == "std-gaussian":
            return 1.0
        if self.name == "sphere":
            return self.radius ** 2 / self.dim
        return self.radius ** 2 / (self.dim + 2)

    def exact_ck(self, k: int) -> float:
        if self.name == "std-gaussian":
            return 1.0
        d = self.dim
        # unit-sphere coordinate: E(t^2k) = (2k-1)!! / (d (d+2) ... (d+2k-2))
        ck = 1.0
        for j in range(k):
            ck *= d / (d + 2 * j)
        if self.name == "ball":
            # E(R^2k) = d / (d + 2k) for the radial part on the unit ball
            ck *= (d / (d + 2 * k)) / (d / (d + 2)) ** k
        return ck


@dataclass(frozen=True, eq=False)
class AnisotropicSampler:
    """Deliberately non-isotropic samplers, for exercising the checks.

    ``gaussian-diag`` draws ``N(0, diag(scales**2))``; every projection of it
    is Gaussian, so it fails the covariance check but not the ``c_k``
    direction check.  ``cube`` draws uniformly from ``[-1, 1]**dim`` and has
    direction-dependent ``c_k``.
    """

    kind: str
    dim: int
    seed: int
    scales: tuple = ()

    def draw(self, count: int, threads: int = 1) -> np.ndarray:
        def block(s, lo, hi):
            if self.kind == "gaussian-diag":
                return sharded_normals(self.seed, s, hi - lo, self.dim) * np.asarray(self.scales)
            if self.kind == "cube":
                u = sharded_uniforms(self.seed, s, (hi - lo) * self.dim, channel=0)
                return (2.0 * u - 1.0).reshape(hi - lo, self.dim)
            raise ValidationError(f"unknown anisotropic sampler {self.kind!r}")

        return np.concatenate(shard_map(block, count, threads), axis=0)


@dataclass(frozen=True)
class CkEstimate:
    k: int
    value: float
    stderr: float
    direction: tuple
    samples: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "value": self.value,
            "stderr": self.stderr,
            "direction": list(self.direction),
            "samples": self.samples,
        }


@dataclass(frozen=True)
class DirectionReport:
    k: int
    passed: bool
    estimates: tuple
    max_z: float
    samples: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "passed": self.passed,
            "max_z": self.max_z,
            "samples": self.samples,
            "estimates": [e.to_json() for e in self.estimates],
        }


@dataclass(frozen=True)
class IsotropyReport:
    lambda_hat: float
    max_offdiag: float
    max_diag_spread: float
    samples: int

    def to_json(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "max_offdiag": self.max_offdiag,
            "max_diag_spread": self.max_diag_spread,
            "samples": self.samples,
        }


def _ck_ratio(proj: np.ndarray, k: int) -> float:
    m2 = float(np.mean(proj ** 2))
    if m2 == 0.0:
        raise NumericalError("E(X^2) estimate is zero; c_k is undefined for a point mass at 0")
    if k == 1:
        return 1.0
    m2k = float(np.mean(proj ** (2 * k)))
    return m2k / m2 ** k / pair_partition_count(2 * k)


def _ck_batches(proj: np.ndarray, k: int) -> np.ndarray:
    return np.array([_ck_ratio(proj[b::BATCHES], k) for b in range(BATCHES)])


def _check_ck_args(k, samples: int) -> int:
    k = as_int(k)
    if k < 1:
        raise ValidationError(f"k must be at least 1, got {k}")
    if as_int(samples) < 1000:
        raise ValidationError(f"need at least 1000 samples, got {samples}")
    return k


def _direction(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.shape != (dim,):
        raise ValidationError(f"direction must have {dim} components, got {a.size}")
    if not np.any(a):
        raise ValidationError("direction must be nonzero")
    return a


def estimate_ck(sampler, k: int, direction, samples: int, threads: int = 1) -> CkEstimate:
    """Plug-in estimate of ``c_k`` along ``direction`` with a 32-batch-means stderr.

    ``k = 1`` gives exactly 1.
    """
    k = _check_ck_args(k, samples)
    a = _direction(direction, sampler.dim)
    proj = sampler.draw(samples, threads) @ a
    value = _ck_ratio(proj, k)
    err = 0.0 if k == 1 else batch_stderr(_ck_batches(proj, k))
    return CkEstimate(k, value, err, tuple(a.tolist()), samples)


def ck_direction_independence(
    sampler, k: int, directions, samples: int, threads: int = 1, z_max: float = 5.0
) -> DirectionReport:
    """Check that ``c_k`` agrees across directions on one shared sample.

    Each pairwise difference is compared with the batch-means stderr of the
    per-batch difference, which accounts for the shared samples.
    """
    k = _check_ck_args(k, samples)
    dirs = [_direction(a, sampler.dim) for a in directions]
    if len(dirs) < 2:
        raise ValidationError("need at least two directions")
    x = sampler.draw(samples, threads)
    projs = [x @ a for a in dirs]
    values = [_ck_ratio(p, k) for p in projs]
    batches = [_ck_batches(p, k) for p in projs]
    estimates = tuple(
        CkEstimate(k, v, batch_stderr(b), tuple(a.tolist()), samples)
        for v, b, a in zip(values, batches, dirs)
    )
    max_z = 0.0
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            diff = values[i] - values[j]
            se = batch_stderr(batches[i] - batches[j])
            if diff == 0.0:
                z = 0.0
            elif se == 0.0:
                z = math.inf
            else:
                z = abs(diff) / se
            max_z = max(max_z, z)
    return DirectionReport(k, max_z <= z_max, estimates, max_z, samples)


def covariance_isotropy_check(sampler, samples: int, threads: int = 1) -> IsotropyReport:
    """Estimate ``E(X X^T)`` and measure how far it is from ``lambda_hat * I``."""
    if as_int(samples) < 10_000:
        raise ValidationError(f"need at least 10000 samples, got {samples}")
    x = sampler.draw(samples, threads)
    s = x.T @ x / samples
    diag = np.diag(s)
    lam = float(np.mean(diag))
    off = s - np.diag(diag)
    return IsotropyReport(
        lambda_hat=lam,
        max_offdiag=float(np.max(np.abs(off))),
        max_diag_spread=float(np.max(np.abs(diag - lam))),
        samples=samples,
    )


def isotropic_moment(lam: float, ck: float, vectors, threads: int = 1) -> MomentResult:
    """``ck * sum over PP(n) of prod lam * (a_l . a_r)``; 0 for odd ``n``."""
    a = _as_vectors(vectors)
    if a.shape[0] % 2:
        return MomentResult.analytic(0.0)
    gram = lam * (a @ a.T)
    return MomentResult.analytic(ck * pairing_sum(gram, threads=threads))
