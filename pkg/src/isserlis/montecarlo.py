"""Seeded random streams and streaming moment estimation.

Stream contract
---------------
A :class:`RandomStream` is a PCG64 generator keyed by
``numpy.random.SeedSequence(seed, spawn_key=(shard, channel))``.  Uniforms are
``(i + 0.5) / 2**53`` for 53-bit integers ``i``, so they lie strictly inside
(0, 1).  Standard normals are the inverse normal CDF of those uniforms
(``scipy.special.ndtri``, the Cephes rational approximation), so every normal
costs exactly one uniform and no rejection loop can desynchronise streams.

Large draws are split into shards of :data:`SHARD_SIZE` rows with one stream
per shard.  The shard layout depends only on the row count, never on the
thread count, and shard results are combined in shard order.

Standard errors are batch means: sample ``i`` (0-based, in stream order)
goes to batch ``i % 32`` and the standard error is the sample standard
deviation of the 32 batch means divided by ``sqrt(32)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from scipy.special import ndtri

from .errors import NumericalError, ValidationError

__all__ = [
    "BATCHES",
    "SHARD_SIZE",
    "RandomStream",
    "StreamingMoments",
    "batch_stderr",
    "stderr",
    "update",
    "standard_normals",
    "sharded_normals",
    "sharded_uniforms",
    "shard_bounds",
    "shard_map",
]

BATCHES = 32
SHARD_SIZE = 1 << 16  # a multiple of BATCHES, so shards keep batch alignment

_U53 = 2.0 ** -53

T = TypeVar("T")


class RandomStream:
    """A deterministic stream of uniforms and standard normals.

    ``shard`` and ``channel`` derive independent child streams from one user
    seed; the same ``(seed, shard, channel)`` always reproduces the same
    numbers.
    """

    def __init__(self, seed: int, shard: int = 0, channel: int = 0):
        if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2 ** 64:
            raise ValidationError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        self.seed = int(seed)
        self.shard = int(shard)
        self.channel = int(channel)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.shard, self.channel))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def uniforms(self, count: int) -> np.ndarray:
        bits = self._gen.integers(0, 1 << 53, size=count, dtype=np.uint64)
        return (bits.astype(np.float64) + 0.5) * _U53

    def standard_normals(self, count: int) -> np.ndarray:
        return ndtri(self.uniforms(count))


def standard_normals(stream: RandomStream, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. N(0, 1) values from ``stream``."""
    if count < 1:
        raise ValidationError(f"count must be positive, got {count}")
    return stream.standard_normals(count)


def shard_bounds(count: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + SHARD_SIZE, count)) for lo in range(0, count, SHARD_SIZE)]


def shard_map(fn: Callable[[int, int, int], T], count: int, threads: int = 1) -> list[T]:
    """Apply ``fn(shard, lo, hi)`` to every shard of ``count`` rows, results in shard order."""
    jobs = [(s, lo, hi) for s, (lo, hi) in enumerate(shard_bounds(count))]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def sharded_normals(seed: int, shard: int, rows: int, dim: int, channel: int = 0) -> np.ndarray:
    """The ``(rows, dim)`` block of standard normals belonging to one shard."""
    return RandomStream(seed, shard, channel).standard_normals(rows * dim).reshape(rows, dim)


def sharded_uniforms(seed: int, shard: int, rows: int, channel: int = 1) -> np.ndarray:
    return RandomStream(seed, shard, channel).uniforms(rows)


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _mean_parts(xs: np.ndarray) -> tuple[float, float, np.ndarray]:
    # mean as hi + lo, with lo the mean of the residuals about hi
    hi = float(xs.mean())
    resid = xs - hi
    return hi, float(resid.mean()), resid


class StreamingMoments:
    """Single-pass mean/variance with 32 interleaved batch means.

    ``update`` is Welford's recurrence; ``update_many`` and ``merge`` use the
    pairwise (Chan et al.) combination, which reduces to the same recurrence
    for a single value.  The running mean is carried as an unevaluated sum
    ``mean + mean_lo`` so that data with a large offset (say ``1e8`` plus unit
    noise) keep full relative accuracy in the variance.  ``merge`` is
    order-sensitive only in rounding; the package always merges shards left
    to right in shard order.
    """

    __slots__ = ("count", "mean", "mean_lo", "m2", "batch_count", "batch_mean")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.mean_lo = 0.0
        self.m2 = 0.0
        self.batch_count = np.zeros(BATCHES, dtype=np.int64)
        self.batch_mean = np.zeros(BATCHES, dtype=np.float64)

    def update(self, x: float) -> "StreamingMoments":
        x = float(x)
        b = self.count % BATCHES
        self.count += 1
        delta = (x - self.mean) - self.mean_lo
        hi, err = _two_sum(self.mean, delta / self.count)
        self.mean, self.mean_lo = _two_sum(hi, self.mean_lo + err)
        self.m2 += delta * ((x - self.mean) - self.mean_lo)
        self.batch_count[b] += 1
        self.batch_mean[b] += (x - self.batch_mean[b]) / self.batch_count[b]
        return self

    def update_many(self, xs: Iterable[float]) -> "StreamingMoments":
        xs = np.asarray(xs, dtype=np.float64).ravel()
        if xs.size == 0:
            return self
        other = StreamingMoments()
        other.count = xs.size
        hi, lo, resid = _mean_parts(xs)
        other.mean, other.mean_lo = _two_sum(hi, lo)
        other.m2 = float(np.sum((resid - lo) ** 2))
        for b in range(min(BATCHES, xs.size)):
            part = xs[b::BATCHES]
            other.batch_count[b] = part.size
            other.batch_mean[b] = sum(_mean_parts(part)[:2])
        return self.merge(other)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        """Append ``other`` as if its samples followed this stream's samples."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.m2 = other.count, other.m2
            self.mean, self.mean_lo = other.mean, other.mean_lo
            self.batch_count = other.batch_count.copy()
            self.batch_mean = other.batch_mean.copy()
            return self
        n = self.count + other.count
        delta = (other.mean - self.mean) + (other.mean_lo - self.mean_lo)
        self.m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        hi, err = _two_sum(self.mean, delta * (other.count / n))
        self.mean, self.mean_lo = _two_sum(hi, self.mean_lo + err)
        # other's local batch b holds global indices congruent to b + self.count
        shift = self.count % BATCHES
        ob_count = np.roll(other.batch_count, shift)
        ob_mean = np.roll(other.batch_mean, shift)
        total = self.batch_count + ob_count
        safe = np.where(total > 0, total, 1)
        self.batch_mean = np.where(
            total > 0,
            self.batch_mean + (ob_mean - self.batch_mean) * (ob_count / safe),
            0.0,
        )
        self.batch_count = total
        self.count = n
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            raise NumericalError("variance needs at least two samples")
        return self.m2 / (self.count - 1)

    def stderr(self) -> float:
        """Batch-means standard error of :attr:`mean`."""
        if self.count < 2 * BATCHES or self.batch_count.min() < 2:
            raise NumericalError(
                f"batch-means stderr needs at least {2 * BATCHES} samples, have {self.count}"
            )
        return batch_stderr(self.batch_mean)

    @classmethod
    def from_values(cls, xs: Iterable[float]) -> "StreamingMoments":
        return cls().update_many(xs)


def batch_stderr(batch_values: Sequence[float]) -> float:
    """Standard deviation of per-batch estimates divided by ``sqrt(len)``."""
    v = np.asarray(batch_values, dtype=np.float64)
    if np.all(v == v[0]):
        return 0.0
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def update(sm: StreamingMoments, x: float) -> StreamingMoments:
    return sm.update(x)


def stderr(sm: StreamingMoments) -> float:
    return sm.stderr()
