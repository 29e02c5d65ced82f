"""Bloom filter sized by target false-positive probability.

The sizing inverts n = -s ln^2(2) / ln(fpp); the probe positions come
from double hashing over two 64-bit halves of a keyed blake2b digest of
the key's little-endian encoding, so filters are deterministic and
portable across platforms.  No false negatives, ever.
"""

from __future__ import annotations

import hashlib
import math
import struct

# Fixed hashing seed; changing it invalidates every serialized filter.
_HASH_PERSON = b"easort-bloom-v1"

_HEADER = struct.Struct("<QIQ")  # bits, hash count, inserted


def size_for(n_keys: int, fpp: float) -> int:
    """Bits needed to hold n_keys at the target false-positive probability."""
    if n_keys < 1:
        raise ValueError(f"n_keys must be >= 1, got {n_keys}")
    if not 0.0 < fpp < 1.0:
        raise ValueError(f"fpp must be in (0, 1), got {fpp}")
    return math.ceil(-n_keys * math.log(fpp) / (math.log(2) ** 2))


def optimal_hash_count(bits: int, n_keys: int) -> int:
    """round(ln 2 * s / n), floored at one hash function."""
    if bits < 1 or n_keys < 1:
        raise ValueError("bits and n_keys must be >= 1")
    return max(1, round(math.log(2) * bits / n_keys))


def _probe_pair(key: int) -> tuple[int, int]:
    digest = hashlib.blake2b(
        struct.pack("<Q", key), digest_size=16, person=_HASH_PERSON
    ).digest()
    h1, h2 = struct.unpack("<QQ", digest)
    return h1, h2 | 1  # odd stride avoids a degenerate zero step


class BloomFilter:
    """Bit array of ``size`` bits probed at ``hash_count`` positions per key."""

    __slots__ = ("size", "hash_count", "inserted", "_bits")

    def __init__(self, size: int, hash_count: int):
        if size < 1:
            raise ValueError(f"size must be >= 1, got {size}")
        if hash_count < 1:
            raise ValueError(f"hash_count must be >= 1, got {hash_count}")
        self.size = size
        self.hash_count = hash_count
        self.inserted = 0
        self._bits = bytearray((size + 7) // 8)

    @classmethod
    def for_capacity(cls, n_keys: int, fpp: float) -> "BloomFilter":
        bits = size_for(n_keys, fpp)
        return cls(bits, optimal_hash_count(bits, n_keys))

    @classmethod
    def build(cls, keys, fpp: float) -> "BloomFilter":
        keys = list(keys)
        flt = cls.for_capacity(len(keys), fpp)
        for k in keys:
            flt.insert(k)
        return flt

    def _positions(self, key: int):
        h1, h2 = _probe_pair(key)
        s = self.size
        for i in range(self.hash_count):
            yield (h1 + i * h2) % s

    def insert(self, key: int) -> None:
        for pos in self._positions(key):
            self._bits[pos >> 3] |= 1 << (pos & 7)
        self.inserted += 1

    def contains(self, key: int) -> bool:
        bits = self._bits
        for pos in self._positions(key):
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    def __contains__(self, key: int) -> bool:
        return self.contains(key)

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.size, self.hash_count, self.inserted) + bytes(self._bits)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["BloomFilter", int]:
        """Deserialize; returns the filter and the offset just past it."""
        size, hash_count, inserted = _HEADER.unpack_from(data, offset)
        offset += _HEADER.size
        nbytes = (size + 7) // 8
        flt = cls(size, hash_count)
        flt.inserted = inserted
        flt._bits = bytearray(data[offset : offset + nbytes])
        if len(flt._bits) != nbytes:
            raise ValueError("truncated filter payload")
        return flt, offset + nbytes

    def serialized_length(self) -> int:
        return _HEADER.size + (self.size + 7) // 8

    def __eq__(self, other) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (
            self.size == other.size
            and self.hash_count == other.hash_count
            and self.inserted == other.inserted
            and self._bits == other._bits
        )
