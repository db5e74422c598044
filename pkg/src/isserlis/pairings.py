"""Pair partitions (perfect matchings) of ``{1, ..., n}``.

Positions are 1-based everywhere a pairing leaves this module.  A pairing
is in canonical form when each pair is ``(l, r)`` with ``l < r`` and the
pairs are sorted by ``l``; the enumeration order pairs the smallest unpaired
position with each larger unpaired position in increasing order, then
recurses.
"""

from __future__ import annotations

import itertools
import json
import math
import operator
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, Sequence

from .errors import ValidationError

__all__ = [
    "PairPartition",
    "pair_partition_count",
    "enumerate_pair_partitions",
    "paired_index_tuples",
    "pairing_sum",
    "render_wick_expansion",
]


class PairPartition(tuple):
    """A perfect matching stored as a tuple of 1-based ``(l, r)`` pairs.

    Instances produced by :func:`enumerate_pair_partitions` skip validation;
    use :meth:`from_pairs` for untrusted input.
    """

    __slots__ = ()

    @classmethod
    def from_pairs(cls, pairs) -> "PairPartition":
        canon = sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in pairs)
        seen = [x for pair in canon for x in pair]
        if sorted(seen) != list(range(1, len(seen) + 1)):
            raise ValidationError(f"not a perfect matching of 1..{len(seen)}: {pairs!r}")
        if any(a == b for a, b in canon):
            raise ValidationError(f"degenerate pair in {pairs!r}")
        return cls(canon)

    @property
    def k(self) -> int:
        return len(self)

    @property
    def n(self) -> int:
        return 2 * len(self)

    def to_json(self) -> list:
        return [list(pair) for pair in self]

    @classmethod
    def from_json(cls, data) -> "PairPartition":
        if isinstance(data, str):
            data = json.loads(data)
        return cls.from_pairs(data)

    def __repr__(self) -> str:
        return "PairPartition(" + tuple.__repr__(self) + ")"


def pair_partition_count(n: int) -> int:
    """Number of perfect matchings of ``n`` points, ``(n - 1)!!`` for even ``n``.

    Exact integer arithmetic; 0 for odd ``n`` and 1 for ``n = 0``.
    """
    n = as_int(n)
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if n % 2:
        return 0
    count = 1
    for odd in range(n - 1, 0, -2):
        count *= odd
    return count


def as_int(value) -> int:
    try:
        return operator.index(value)
    except TypeError:
        raise ValidationError(f"expected an integer, got {value!r}") from None


def _canonical_pairings(positions: tuple) -> Iterator[tuple]:
    # Odometer over the partner choice at each level.  rests[t] holds the
    # positions still unpaired before level t, in increasing order.
    k = len(positions) // 2
    if k == 0:
        yield ()
        return
    rests = [positions] + [()] * k
    prefix = [None] * k
    choice = [0] * k
    for t in range(k):
        r = rests[t]
        prefix[t] = (r[0], r[1])
        rests[t + 1] = r[2:]
    while True:
        yield tuple(prefix)
        # the last level always has exactly one choice
        t = k - 2
        while t >= 0:
            choice[t] += 1
            c = choice[t]
            r = rests[t]
            if c + 1 < len(r):
                prefix[t] = (r[0], r[c + 1])
                rests[t + 1] = r[1:c + 1] + r[c + 2:]
                break
            choice[t] = 0
            t -= 1
        if t < 0:
            return
        for u in range(t + 1, k):
            r = rests[u]
            prefix[u] = (r[0], r[1])
            rests[u + 1] = r[2:]


def enumerate_pair_partitions(n: int, first_partner: int | None = None) -> Iterator[PairPartition]:
    """Lazily yield every element of PP(n) once, in canonical order.

    ``first_partner`` restricts the sequence to the shard of pairings that
    contain ``(1, first_partner)``; the shards for ``first_partner = 2..n``
    concatenate to the full sequence.
    """
    n = as_int(n)
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if n % 2:
        return
    if first_partner is None:
        for p in _canonical_pairings(tuple(range(1, n + 1))):
            yield PairPartition(p)
        return
    if not 2 <= first_partner <= n:
        raise ValidationError(f"first_partner must lie in 2..{n}, got {first_partner}")
    head = (1, first_partner)
    rest = tuple(i for i in range(2, n + 1) if i != first_partner)
    for p in _canonical_pairings(rest):
        yield PairPartition((head,) + p)


def paired_index_tuples(p: Sequence[tuple[int, int]], d: int) -> Iterator[tuple[int, ...]]:
    """Lazily yield the set K_d(p) of index tuples constant on every pair.

    Tuples are 1-based and ordered lexicographically by the values assigned
    to the pairs (pairs taken in order of their left position).  There are
    ``d ** k`` of them.
    """
    d = as_int(d)
    if d < 1:
        raise ValidationError(f"d must be positive, got {d}")
    pairs = sorted((min(a, b), max(a, b)) for a, b in p)
    n = 2 * len(pairs)
    slots = [0] * n
    for values in itertools.product(range(1, d + 1), repeat=len(pairs)):
        for (l, r), v in zip(pairs, values):
            slots[l - 1] = v
            slots[r - 1] = v
        yield tuple(slots)


def _shard_sum(weights: list, n: int, first: int) -> float:
    # Sum of prod W[l][r] over the shard of PP(n) with pair (0, first);
    # positions here are 0-based.  Running products are shared by prefixes.
    rest = tuple(i for i in range(1, n) if i != first)
    head = weights[0][first]
    k = len(rest) // 2
    if k == 0:
        return head

    def terms():
        rests = [rest] + [()] * k
        prods = [head] + [0.0] * k
        choice = [0] * k
        for t in range(k):
            r = rests[t]
            prods[t + 1] = prods[t] * weights[r[0]][r[1]]
            rests[t + 1] = r[2:]
        while True:
            yield prods[k]
            t = k - 2
            while t >= 0:
                choice[t] += 1
                c = choice[t]
                r = rests[t]
                if c + 1 < len(r):
                    prods[t + 1] = prods[t] * weights[r[0]][r[c + 1]]
                    rests[t + 1] = r[1:c + 1] + r[c + 2:]
                    break
                choice[t] = 0
                t -= 1
            if t < 0:
                return
            for u in range(t + 1, k):
                r = rests[u]
                prods[u + 1] = prods[u] * weights[r[0]][r[1]]
                rests[u + 1] = r[2:]

    return math.fsum(terms())


def pairing_sum(weights, threads: int = 1) -> float:
    """Sum over p in PP(n) of the product of ``weights[l, r]`` over pairs of p.

    ``weights`` is an ``n x n`` array-like (only entries with ``l < r`` are
    read).  This is the hafnian of ``weights``.  The work is split into the
    ``n - 1`` shards fixed by the partner of the first position; each shard
    is summed with :func:`math.fsum` and the shard sums are combined in
    shard order, so the result does not depend on ``threads``.
    """
    w = [[float(x) for x in row] for row in weights]
    n = len(w)
    if any(len(row) != n for row in w):
        raise ValidationError("weights must be a square matrix")
    if n % 2:
        return 0.0
    if n == 0:
        return 1.0
    shards = range(1, n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partial = list(pool.map(lambda j: _shard_sum(w, n, j), shards))
    else:
        partial = [_shard_sum(w, n, j) for j in shards]
    return math.fsum(partial)


_TRAILING_DIGITS = re.compile(r"^(.*?)(\d+)$")


def _latex_name(name: str) -> str:
    m = _TRAILING_DIGITS.match(name)
    if m and m.group(1):
        return f"{m.group(1)}_{{{m.group(2)}}}"
    return name


def render_wick_expansion(n: int, names: Sequence[str] | None = None, format: str = "text") -> str:
    """Render the right-hand side of Isserlis' formula for ``E(names[0] ... names[n-1])``.

    >>> render_wick_expansion(4, ["Y1", "Y2", "Y3", "Y4"])
    'E(Y1 Y2)E(Y3 Y4) + E(Y1 Y3)E(Y2 Y4) + E(Y1 Y4)E(Y2 Y3)'
    """
    n = as_int(n)
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if names is None:
        names = [f"Y{i}" for i in range(1, n + 1)]
    names = list(names)
    if len(names) != n:
        raise ValidationError(f"expected {n} names, got {len(names)}")
    if format == "text":
        fmt_name, expect = str, "E({} {})"
    elif format == "latex":
        fmt_name, expect = _latex_name, r"\mathsf{{E}}({} {})"
    else:
        raise ValidationError(f"unknown format {format!r}; use 'text' or 'latex'")
    if n % 2:
        return "0"
    if n == 0:
        return "1"
    shown = [fmt_name(s) for s in names]
    terms = (
        "".join(expect.format(shown[l - 1], shown[r - 1]) for l, r in p)
        for p in enumerate_pair_partitions(n)
    )
    return " + ".join(terms)
