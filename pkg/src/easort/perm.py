"""Permutations of 1..n and the distance metrics used to score approximate sorts.

A permutation is kept in word form: ``entries[i-1]`` is the value at
position ``i``.  Two metric families are provided.  The rank metrics
(``d_errors``, ``d_sp``) charge any displacement; their block-level
counterparts (``d_ee``, ``d_esp``) charge only displacement that crosses a
boundary between blocks of ``b`` consecutive positions, which is what an
external algorithm actually pays for.  All metric arithmetic is exact
integer arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

#: Largest n accepted by exhaustive ball enumeration (9! = 362880 permutations).
ENUMERATION_LIMIT = 9


class MetricKind(Enum):
    """Selector for the four distance metrics."""

    ERRORS = "errors"
    EXTERNAL_ERRORS = "external_errors"
    SPEARMAN = "spearman"
    ESP = "esp"


@dataclass(frozen=True)
class Permutation:
    """An arrangement of the integers 1..n.

    ``entries`` must be a bijection on {1..n}; construction validates this.
    The object behaves as a read-only sequence of its entries.
    """

    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        n = len(self.entries)
        if n == 0:
            raise ValueError("empty permutation")
        mask = 0
        for v in self.entries:
            if not isinstance(v, int) or not 1 <= v <= n:
                raise ValueError(f"entry {v!r} outside 1..{n}")
            mask |= 1 << v
        if mask != (1 << (n + 1)) - 2:
            raise ValueError(f"entries are not a bijection on 1..{n}")

    @property
    def n(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> int:
        return self.entries[i]


def identity(n: int) -> Permutation:
    """The sorted permutation (1, 2, ..., n)."""
    if n < 1:
        raise ValueError("empty permutation")
    return Permutation(tuple(range(1, n + 1)))


def permutation_from_keys(keys: Sequence) -> Permutation:
    """Map an arbitrary orderable sequence to its rank permutation.

    Position i receives the rank of keys[i]; equal keys are ranked by input
    position (stable), so the result is always a valid permutation even on
    data with duplicates.

    >>> permutation_from_keys([30, 10, 20]).entries
    (3, 1, 2)
    >>> permutation_from_keys([5, 5, 1]).entries
    (2, 3, 1)
    """
    if len(keys) == 0:
        raise ValueError("empty sequence")
    order = sorted(range(len(keys)), key=lambda i: (keys[i], i))
    entries = [0] * len(keys)
    for rank, pos in enumerate(order, start=1):
        entries[pos] = rank
    return Permutation(tuple(entries))


def _entries(p: "Permutation | Sequence[int]") -> Sequence[int]:
    return p.entries if isinstance(p, Permutation) else p


def _check_pair(p: Sequence[int], q: Sequence[int]) -> None:
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")


def _check_block(b: int) -> None:
    if not isinstance(b, int) or b < 1:
        raise ValueError(f"block width must be a positive integer, got {b!r}")


def d_errors(p, q) -> int:
    """Number of positions where the two permutations disagree.

    Range [0, n]; zero exactly when p == q.  Note a value of 1 is
    impossible: a single misplaced element forces a second.
    """
    pe, qe = _entries(p), _entries(q)
    _check_pair(pe, qe)
    return sum(1 for x, y in zip(pe, qe) if x != y)


def d_ee(p, q, b: int) -> int:
    """Number of positions whose element lands in the wrong b-sized block.

    Equals ``d_errors`` when b == 1; displacement inside one block is free.
    """
    pe, qe = _entries(p), _entries(q)
    _check_pair(pe, qe)
    _check_block(b)
    return sum(1 for x, y in zip(pe, qe) if (x + b - 1) // b != (y + b - 1) // b)


def d_sp(p, q) -> int:
    """Spearman's footrule: sum of absolute rank displacements."""
    pe, qe = _entries(p), _entries(q)
    _check_pair(pe, qe)
    return sum(abs(x - y) for x, y in zip(pe, qe))


def d_esp(p, q, b: int) -> int:
    """Block-level footrule: sum of absolute block-number displacements.

    Equals ``d_sp`` when b == 1.  Against the sorted permutation the value
    is at most n^2 / (2 b).
    """
    pe, qe = _entries(p), _entries(q)
    _check_pair(pe, qe)
    _check_block(b)
    return sum(abs((x + b - 1) // b - (y + b - 1) // b) for x, y in zip(pe, qe))


def metric_distance(kind: MetricKind, p, q, b: int = 1) -> int:
    """Dispatch to one of the four metrics; b is ignored by the rank metrics."""
    if kind is MetricKind.ERRORS:
        return d_errors(p, q)
    if kind is MetricKind.EXTERNAL_ERRORS:
        return d_ee(p, q, b)
    if kind is MetricKind.SPEARMAN:
        return d_sp(p, q)
    if kind is MetricKind.ESP:
        return d_esp(p, q, b)
    raise ValueError(f"unknown metric {kind!r}")


def compose(p, t) -> Permutation:
    """The permutation whose i-th entry is p(t(i))."""
    pe, te = _entries(p), _entries(t)
    _check_pair(pe, te)
    return Permutation(tuple(pe[j - 1] for j in te))


@lru_cache(maxsize=None)
def _distance_histogram(n: int, b: int, kind: MetricKind) -> tuple[int, ...]:
    """Count permutations of S_n at each distance from the identity."""
    ident = tuple(range(1, n + 1))
    counts: dict[int, int] = {}
    for perm in itertools.permutations(ident):
        d = metric_distance(kind, perm, ident, b)
        counts[d] = counts.get(d, 0) + 1
    top = max(counts)
    return tuple(counts.get(d, 0) for d in range(top + 1))


def ball_size_exhaustive(n: int, b: int, r: int, kind: MetricKind) -> int:
    """Count permutations within distance r of the identity by full enumeration.

    By right-invariance the count is independent of the ball's center, so
    the identity is used.  Guarded at n <= 9 to keep runtime in seconds;
    this is the brute-force oracle the closed-form ball bounds are checked
    against.
    """
    if n < 1:
        raise ValueError("empty permutation")
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration limit: n={n} exceeds {ENUMERATION_LIMIT}")
    _check_block(b)
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    hist = _distance_histogram(n, b, kind)
    return sum(hist[: r + 1])


def random_permutation(n: int, rng) -> Permutation:
    """Uniform random permutation drawn from ``rng`` (Fisher-Yates shuffle)."""
    entries = list(range(1, n + 1))
    rng.shuffle(entries)
    return Permutation(tuple(entries))
