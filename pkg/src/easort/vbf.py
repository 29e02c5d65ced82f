"""Bloom-filter tree index over an approximate-sorted run.

Internal nodes route a key to its bucket exactly as in a B+-tree; each
bucket owns a chain of leaf nodes holding one entry per data block: the
block's true key range plus a Bloom filter of its keys.  A point lookup
therefore probes only the filters whose block range contains the key, and
reads a data block only on a filter hit, verifying by binary search inside
the sorted block.  Range scans skip the filters entirely and read exactly
the blocks whose ranges overlap the query.

Index nodes live in the block store, one node per block, so query-time
node fetches are charged I/O on the same meter as data blocks.
"""

from __future__ import annotations

import math
import struct
from bisect import bisect_left
from dataclasses import dataclass

from easort.bloom import BloomFilter
from easort.iosim import BlockStore, ParameterError, Workspace
from easort.sorting import ApproxRun, compute_bucket_count

_INF = 2**64 - 1  # serialized stand-in for an unbounded upper key

_LEAF_HEADER = struct.Struct("<BIQ")  # node type, entry count, next block (or _INF)
_INTERNAL_HEADER = struct.Struct("<BI")  # node type, child count
_LEAF_ENTRY_FIXED = struct.Struct("<IIQQ")  # file, block index, min key, max key
_CHILD = struct.Struct("<QQ")  # upper bound, child pointer

_TYPE_INTERNAL = 0
_TYPE_LEAF = 1


class DegenerateModelError(ValueError):
    """The analytical cost model has no meaningful value at these parameters."""


@dataclass(frozen=True)
class CostParams:
    """Inputs of the analytical cost model.

    ``keysize`` and ``ptrsize`` are in bytes; ``p`` and ``k`` describe the
    run (buckets per pass, passes), so the modelled bucket count is p^k.
    """

    b: int
    n: int
    m: int
    p: int
    k: int
    keysize: int = 8
    ptrsize: int = 8
    fpp: float = 0.01

    def __post_init__(self) -> None:
        if self.keysize < 1 or self.ptrsize < 1:
            raise ParameterError("keysize and ptrsize must be >= 1")
        if not 0.0 < self.fpp < 1.0:
            raise ParameterError(f"fpp must be in (0, 1), got {self.fpp}")
        if min(self.b, self.n, self.m, self.p, self.k) < 1:
            raise ParameterError("b, n, m, p, k must all be >= 1")

    @classmethod
    def from_run(cls, run: ApproxRun, keysize: int = 8, ptrsize: int = 8,
                 fpp: float = 0.01) -> "CostParams":
        pr = run.params
        return cls(
            b=pr.b,
            n=pr.n,
            m=pr.m,
            p=compute_bucket_count(pr.m, pr.b),
            k=max(1, run.passes_used),
            keysize=keysize,
            ptrsize=ptrsize,
            fpp=fpp,
        )


@dataclass(frozen=True)
class CostModel:
    """Predicted index shape and query costs."""

    fanout: int
    vbf_height: int
    bfs_per_block: int
    leaves_io: float
    fpp: float

    def data_io(self, matched_bfs: float) -> float:
        return matched_bfs * self.fpp

    def single_query_io(self, matched_bfs: float) -> float:
        return self.vbf_height + self.leaves_io + self.data_io(matched_bfs)

    def range_query_io(self, n_buckets: int, matched_bfs: float) -> float:
        return 2 * self.vbf_height + n_buckets * self.leaves_io + matched_bfs


def _ceil_log(base: int, value: int) -> int:
    """Smallest h with base**h >= value (exact integer arithmetic)."""
    h, power = 0, 1
    while power < value:
        power *= base
        h += 1
    return h


def cost_model(cp: CostParams) -> CostModel:
    """Evaluate the index shape equations; raises when they degenerate.

    fanout      = floor(b ks / (ps + ks))
    VBFh        = ceil(log_fanout buckets) + 1
    BFsPerBlock = floor((b ks - 8 - ps) / (2 ks - b ln(fpp) / ln^2 2))
    leavesIO    = n / (b p^k BFsPerBlock)
    dataIO      = matchedBFs * fpp
    """
    fanout = (cp.b * cp.keysize) // (cp.ptrsize + cp.keysize)
    if fanout < 2:
        raise DegenerateModelError(f"cost model degenerate: fanout={fanout}")
    n_buckets = cp.p**cp.k
    vbf_height = _ceil_log(fanout, n_buckets) + 1
    numer = cp.b * cp.keysize - 8 - cp.ptrsize
    denom = 2 * cp.keysize - (cp.b * math.log(cp.fpp)) / (math.log(2) ** 2)
    bfs = int(numer / denom) if numer > 0 else 0
    if bfs < 1:
        raise DegenerateModelError(
            f"cost model degenerate: BFsPerBlock=0 "
            f"(numerator {numer}, denominator {denom:.2f})"
        )
    leaves_io = cp.n / (cp.b * n_buckets * bfs)
    return CostModel(fanout, vbf_height, bfs, leaves_io, cp.fpp)


# -- node encoding --------------------------------------------------------


@dataclass
class LeafEntry:
    file: int
    block_index: int
    min_key: int
    max_key: int
    bloom: BloomFilter

    def covers(self, key: int) -> bool:
        return self.min_key <= key <= self.max_key


def _encode_leaf(entries: list[LeafEntry], next_block: int | None) -> bytes:
    out = [_LEAF_HEADER.pack(_TYPE_LEAF, len(entries),
                             _INF if next_block is None else next_block)]
    for e in entries:
        out.append(_LEAF_ENTRY_FIXED.pack(e.file, e.block_index, e.min_key, e.max_key))
        out.append(e.bloom.to_bytes())
    return b"".join(out)


def _decode_leaf(data: bytes) -> tuple[list[LeafEntry], int | None]:
    _, count, nxt = _LEAF_HEADER.unpack_from(data, 0)
    off = _LEAF_HEADER.size
    entries = []
    for _ in range(count):
        file, idx, lo, hi = _LEAF_ENTRY_FIXED.unpack_from(data, off)
        off += _LEAF_ENTRY_FIXED.size
        flt, off = BloomFilter.from_bytes(data, off)
        entries.append(LeafEntry(file, idx, lo, hi, flt))
    return entries, (None if nxt == _INF else nxt)


def _encode_internal(children: list[tuple[int, int]]) -> bytes:
    out = [_INTERNAL_HEADER.pack(_TYPE_INTERNAL, len(children))]
    for upper, child in children:
        out.append(_CHILD.pack(upper, child))
    return b"".join(out)


def _decode_internal(data: bytes) -> list[tuple[int, int]]:
    _, count = _INTERNAL_HEADER.unpack_from(data, 0)
    off = _INTERNAL_HEADER.size
    children = []
    for _ in range(count):
        upper, child = _CHILD.unpack_from(data, off)
        off += _CHILD.size
        children.append((upper, child))
    return children


def _bytes_to_words(data: bytes) -> list[int]:
    if len(data) % 8:
        data = data + b"\x00" * (8 - len(data) % 8)
    return list(struct.unpack(f"<{len(data) // 8}Q", data))


def _words_to_bytes(words: list[int]) -> bytes:
    return struct.pack(f"<{len(words)}Q", *words)


# -- the tree --------------------------------------------------------------


@dataclass(frozen=True)
class _BucketMeta:
    lower: int | None
    upper: int | None
    file: int
    head_block: int
    node_count: int
    count: int


@dataclass
class QueryStats:
    internal_reads: int = 0
    leaf_reads: int = 0
    matched_bfs: int = 0
    data_reads: int = 0
    false_positives: int = 0
    n_buckets: int = 0  # range queries: buckets overlapping the query

    @property
    def total_io(self) -> int:
        return self.internal_reads + self.leaf_reads + self.data_reads


@dataclass
class BuildStats:
    data_reads: int = 0
    index_writes: int = 0


class VbfTree:
    """Read-only index handle produced by :func:`bulk_build`."""

    def __init__(self, store: BlockStore, cp: CostParams, index_file: int,
                 root_block: int, levels: int, buckets: list[_BucketMeta],
                 build_stats: BuildStats):
        self.store = store
        self.cp = cp
        self.index_file = index_file
        self.root_block = root_block
        self.levels = levels
        self.buckets = buckets
        self.build_stats = build_stats

    # node fetches are charged reads against the shared store meter
    def _read_node(self, block: int, ws: Workspace) -> bytes:
        words = self.store.read_block(self.index_file, block, ws)
        data = _words_to_bytes(words)
        ws.release(len(words))
        return data

    def _descend(self, key: int, ws: Workspace, stats: QueryStats) -> int:
        """Walk internal levels; returns the ordinal of the target bucket."""
        block = self.root_block
        for _ in range(self.levels):
            children = _decode_internal(self._read_node(block, ws))
            stats.internal_reads += 1
            uppers = [u for u, _ in children]
            pos = min(bisect_left(uppers, key), len(children) - 1)
            block = children[pos][1]
        return block  # bottom level stores bucket ordinals

    def point_query(self, key: int) -> tuple[list[tuple[tuple[int, int], int]], QueryStats]:
        """All (block reference, key) hits for the key, plus probe statistics."""
        stats = QueryStats()
        ws = Workspace(self.cp.m)
        ordinal = self._descend(key, ws, stats)
        meta = self.buckets[ordinal]
        hits: list[tuple[tuple[int, int], int]] = []
        block: int | None = meta.head_block
        while block is not None:
            entries, block = _decode_leaf(self._read_node(block, ws))
            stats.leaf_reads += 1
            for e in entries:
                if not e.covers(key):
                    continue
                stats.matched_bfs += 1
                if not e.bloom.contains(key):
                    continue
                data = self.store.read_block(e.file, e.block_index, ws)
                stats.data_reads += 1
                lo = bisect_left(data, key)
                if lo < len(data) and data[lo] == key:
                    hits.append(((e.file, e.block_index), key))
                else:
                    stats.false_positives += 1
                ws.release(len(data))
        return hits, stats

    def range_query(self, lo: int, hi: int) -> tuple[list[int], QueryStats]:
        """Every stored key in [lo, hi], read from exactly the overlapping blocks."""
        if lo > hi:
            raise ValueError(f"invalid range: lo={lo} > hi={hi}")
        stats = QueryStats()
        ws = Workspace(self.cp.m)
        first = self._descend(lo, ws, stats)
        last = self._descend(hi, ws, stats)
        stats.n_buckets = last - first + 1
        out: list[int] = []
        for ordinal in range(first, last + 1):
            block: int | None = self.buckets[ordinal].head_block
            while block is not None:
                entries, block = _decode_leaf(self._read_node(block, ws))
                stats.leaf_reads += 1
                for e in entries:
                    if e.max_key < lo or e.min_key > hi:
                        continue
                    data = self.store.read_block(e.file, e.block_index, ws)
                    stats.data_reads += 1
                    out.extend(k for k in data if lo <= k <= hi)
                    ws.release(len(data))
        return out, stats


def _block_filter(cp: CostParams) -> BloomFilter:
    # every entry's filter is sized for a full block so node layout is uniform
    return BloomFilter.for_capacity(cp.b, cp.fpp)


def _leaf_capacity(cp: CostParams, block_bytes: int) -> int:
    """Entries per leaf node: the modelled count when sane, else what fits.

    The modelled BFsPerBlock governs the layout so that measurements track
    the cost equations; when it degenerates (< 1) the builder splits leaves
    at the physical packing limit instead.
    """
    entry_bytes = _LEAF_ENTRY_FIXED.size + _block_filter(cp).serialized_length()
    physical = (block_bytes - _LEAF_HEADER.size) // entry_bytes
    if physical < 1:
        raise ParameterError(
            f"leaf entry of {entry_bytes} bytes exceeds the {block_bytes}-byte block"
        )
    try:
        modelled = cost_model(cp).bfs_per_block
    except DegenerateModelError:
        return physical
    return min(modelled, physical)


def bulk_build(store: BlockStore, run: ApproxRun, cp: CostParams | None = None) -> VbfTree:
    """Build the index over a run: packed leaves first, then the levels above.

    Every data block is read exactly once; each node occupies one block of
    the index file.  Build traffic is tallied in ``tree.build_stats`` so it
    can be excluded from query-cost comparisons.
    """
    if cp is None:
        cp = CostParams.from_run(run)
    if not run.buckets:
        raise ParameterError("cannot index an empty run")
    b = store.params.b
    block_bytes = 8 * b
    leaf_cap = _leaf_capacity(cp, block_bytes)
    physical_children = (block_bytes - _INTERNAL_HEADER.size) // _CHILD.size
    if physical_children < 1:
        raise ParameterError(f"internal node exceeds the {block_bytes}-byte block")
    fanout = (cp.b * cp.keysize) // (cp.ptrsize + cp.keysize)
    internal_cap = max(1, min(physical_children, fanout))

    ws = Workspace(store.params.m)
    stats = BuildStats()
    index_file = store.create_file()

    def write_node(payload: bytes) -> int:
        words = _bytes_to_words(payload)
        if len(words) > b:
            raise ParameterError(f"node of {len(words)} words exceeds b={b}")
        words += [0] * (b - len(words))  # a node occupies a whole block
        ws.acquire(len(words))
        idx = store.write_block(index_file, words, ws)
        stats.index_writes += 1
        return idx

    metas: list[_BucketMeta] = []
    for d in run.buckets:
        entries: list[LeafEntry] = []
        for i in range(store.num_blocks(d.file)):
            keys = store.read_block(d.file, i, ws)
            stats.data_reads += 1
            flt = _block_filter(cp)
            for k in keys:
                flt.insert(k)
            entries.append(LeafEntry(d.file, i, min(keys), max(keys), flt))
            ws.release(len(keys))
        head = store.num_blocks(index_file)
        groups = [entries[off : off + leaf_cap] for off in range(0, len(entries), leaf_cap)]
        for gi, group in enumerate(groups):
            nxt = head + gi + 1 if gi + 1 < len(groups) else None
            write_node(_encode_leaf(group, nxt))
        metas.append(_BucketMeta(d.lower, d.upper, d.file, head, len(groups), d.count))

    def upper_key(u: int | None) -> int:
        if u is None:
            return _INF
        if not 0 <= u < _INF:
            raise ParameterError(f"indexed keys must be below 2^64-1, got bound {u}")
        return u

    # internal levels bottom-up; bottom-level children are bucket ordinals
    level: list[tuple[int, int]] = [(upper_key(m.upper), i) for i, m in enumerate(metas)]
    levels = 0
    while True:
        nodes: list[tuple[int, int]] = []
        for off in range(0, len(level), internal_cap):
            group = level[off : off + internal_cap]
            blk = write_node(_encode_internal(group))
            nodes.append((group[-1][0], blk))
        levels += 1
        if len(nodes) == 1:
            root = nodes[0][1]
            break
        level = nodes

    return VbfTree(store, cp, index_file, root, levels, metas, stats)
