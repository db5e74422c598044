"""Dense multilinear forms and their expectations under Gaussian inputs.

``E(T(Y, ..., Y))`` for ``Y ~ N(0, A A^T)`` is computed two ways:

* over pairings: ``sum_p sum_{k in K_d(p)} T(a_{k_1}, ..., a_{k_n})`` with the
  columns ``a_i`` of ``A``;
* by contraction: ``sum_p sum_j T[j] prod_{(l, r) in p} Sigma[j_l, j_r]``,
  which needs ``Sigma`` only.

Entries are stored with the last index varying fastest.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .gaussian import CholeskyFactor, CovarianceMatrix, MomentResult, _read_json, _summarize
from .montecarlo import StreamingMoments, shard_map, sharded_normals
from .pairings import as_int, enumerate_pair_partitions, paired_index_tuples

__all__ = [
    "MAX_ENTRIES",
    "DenseTensor",
    "read_tensor",
    "evaluate",
    "expectation_via_pairings",
    "expectation_via_sigma_contraction",
    "mc_tensor_expectation",
]

MAX_ENTRIES = 10 ** 8
_MEMO_MAX_ORDER = 6
_MC_ROW_BUDGET = 1 << 22  # floats per intermediate block in the MC contraction


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """An order-``n`` tensor on R^d, held as an ndarray of shape ``(d,) * n``."""

    entries: np.ndarray
    dim: int = 0  # inferred from the shape unless the order is 0

    def __post_init__(self):
        shape = self.entries.shape
        if len(set(shape)) > 1:
            raise ValidationError(f"tensor must have equal extents, got shape {shape}")
        if shape:
            object.__setattr__(self, "dim", shape[0])

    @property
    def order(self) -> int:
        return self.entries.ndim

    @classmethod
    def from_flat(cls, order: int, dim: int, entries) -> "DenseTensor":
        order, dim = as_int(order), as_int(dim)
        if order < 0 or dim < 1:
            raise ValidationError(f"need order >= 0 and dim >= 1, got order={order}, dim={dim}")
        size = dim ** order
        if size > MAX_ENTRIES:
            raise ValidationError(f"dim**order = {size} exceeds the dense limit of {MAX_ENTRIES}")
        try:
            flat = np.array(entries, dtype=np.float64)
        except (TypeError, ValueError):
            raise ValidationError("tensor entries must be numbers") from None
        if flat.ndim != 1 or flat.size != size:
            raise ValidationError(f"expected a flat list of {size} entries, got shape {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValidationError("tensor has non-finite entries")
        t = flat.reshape((dim,) * order)  # C order: last index fastest
        t.setflags(write=False)
        return cls(t, dim)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "dim": self.dim,
            "entries": self.entries.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "DenseTensor":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls.from_flat(data["order"], data["dim"], data["entries"])
        except (KeyError, TypeError):
            raise ValidationError('tensor JSON needs "order", "dim" and "entries"') from None

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        return DenseTensor(self.entries + other.entries, self.dim)

    def __rmul__(self, scale: float) -> "DenseTensor":
        return DenseTensor(scale * self.entries, self.dim)


def read_tensor(path: str | Path) -> DenseTensor:
    return DenseTensor.from_json(_read_json(path))


def _check_dim(t: DenseTensor, d: int) -> None:
    if t.order and t.dim != d:
        raise ValidationError(f"tensor dimension {t.dim} does not match {d}")


def evaluate(t: DenseTensor, vectors) -> float:
    """``T(v_1, ..., v_n) = sum_j T[j_1, ..., j_n] v_1[j_1] ... v_n[j_n]``."""
    if len(vectors) != t.order:
        raise ValidationError(f"order-{t.order} tensor needs {t.order} vectors, got {len(vectors)}")
    out = t.entries
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (t.dim,):
            raise ValidationError(f"vector of shape {v.shape} does not match dimension {t.dim}")
        out = np.tensordot(v, out, axes=(0, 0))
    return float(out)


def expectation_via_pairings(t: DenseTensor, factor: CholeskyFactor) -> MomentResult:
    """Sum ``T(a_{k_1}, ..., a_{k_n})`` over every pairing and every tuple of K_d(p)."""
    _check_dim(t, factor.dim)
    n, d = t.order, factor.dim
    if n % 2:
        return MomentResult.analytic(0.0)
    cols = factor.columns

    def term(ks):
        return evaluate(t, [cols[k - 1] for k in ks])

    if n <= _MEMO_MAX_ORDER:
        term = lru_cache(maxsize=None)(term)
    values = (term(ks) for p in enumerate_pair_partitions(n) for ks in paired_index_tuples(p, d))
    return MomentResult.analytic(math.fsum(values))


def _pairing_weight(sigma: np.ndarray, pairing, n: int) -> np.ndarray:
    # W[j_1..j_n] = prod over pairs of sigma[j_l, j_r]
    letters = string.ascii_letters[:n]
    subs = ",".join(letters[l - 1] + letters[r - 1] for l, r in pairing)
    return np.einsum(f"{subs}->{letters}", *([sigma] * len(pairing)))


def expectation_via_sigma_contraction(t: DenseTensor, cov: CovarianceMatrix) -> MomentResult:
    """Contract ``T`` against ``Sigma`` along each pairing; no factorization needed."""
    _check_dim(t, cov.dim)
    n = t.order
    if n % 2:
        return MomentResult.analytic(0.0)
    if n == 0:
        return MomentResult.analytic(float(t.entries))
    if n > len(string.ascii_letters):
        raise ValidationError(f"order {n} is too large for the contraction path")
    terms = []
    for p in enumerate_pair_partitions(n):
        w = _pairing_weight(cov.sigma, p, n)
        terms.append(math.fsum((t.entries * w).ravel()))
    return MomentResult.analytic(math.fsum(terms))


def _evaluate_rows(entries: np.ndarray, y: np.ndarray) -> np.ndarray:
    # T(y_i, ..., y_i) for every row y_i of y
    m, d = y.shape
    n = entries.ndim
    if n == 0:
        return np.full(m, float(entries))
    x = y @ entries.reshape(d, -1)
    for _ in range(n - 1):
        x = np.einsum("md,mde->me", y, x.reshape(m, d, -1))
    return x[:, 0]


def mc_tensor_expectation(
    t: DenseTensor, factor: CholeskyFactor, seed: int, samples: int, threads: int = 1
) -> MomentResult:
    """Average ``T(Y, ..., Y)`` over ``samples`` draws ``Y = A z``; batch-means stderr."""
    _check_dim(t, factor.dim)
    samples = as_int(samples)
    if samples < 1000:
        raise ValidationError(f"need at least 1000 samples, got {samples}")
    a = factor.matrix
    d = a.shape[0]
    width = max(1, d ** max(t.order - 1, 0))
    step = max(1, _MC_ROW_BUDGET // width)

    def shard(s, lo, hi):
        y = sharded_normals(seed, s, hi - lo, d) @ a.T
        vals = np.concatenate([_evaluate_rows(t.entries, y[i:i + step]) for i in range(0, hi - lo, step)])
        return StreamingMoments.from_values(vals)

    return _summarize(shard_map(shard, samples, threads))
