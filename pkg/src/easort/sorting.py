"""The k-pass external approximate sort.

Each pass splits every live file into p = floor((m-b)/(b+1)) buckets.  The
first floor(m/b) blocks of the file are read as the sample (equivalent to a
random sample under the uniform-input assumption), p-1 pivots are chosen at
the even-division positions of the sorted sample, and every item of the
file, sample included and in original input order, is routed to the bucket
whose half-open range (P_{i-1}, P_i] contains it.  Bucket buffers flush as
sorted blocks whenever they fill; files smaller than memory are simply
sorted outright and marked final.  After k passes the bucket files,
concatenated in range order, form a globally bucket-ordered approximation
of the sorted input.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass

from easort.iosim import BlockStore, IoParams, ParameterError, Workspace
from easort.perm import Permutation, permutation_from_keys


@dataclass(frozen=True)
class EasortConfig:
    """Pass count and the seed threaded to synthetic-input generators."""

    k: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class BucketDescriptor:
    """One output bucket: a file whose keys all lie in (lower, upper].

    ``lower`` is exclusive (None for -inf), ``upper`` inclusive (None for
    +inf).  ``fully_sorted`` marks files whose keys are globally
    nondecreasing, not merely sorted per block.
    """

    file: int
    lower: int | None
    upper: int | None
    count: int
    fully_sorted: bool

    def contains(self, key: int) -> bool:
        if self.lower is not None and key <= self.lower:
            return False
        if self.upper is not None and key > self.upper:
            return False
        return True


@dataclass(frozen=True)
class ApproxRun:
    """The ordered bucket sequence produced by the sort."""

    buckets: tuple[BucketDescriptor, ...]
    params: IoParams
    passes_used: int

    @property
    def total_count(self) -> int:
        return sum(d.count for d in self.buckets)

    def check(self) -> None:
        """Assert the structural invariants; raises on violation."""
        prev_upper: int | None = None
        for i, d in enumerate(self.buckets):
            if i == 0:
                if d.lower is not None:
                    raise AssertionError("first bucket must start at -inf")
            elif d.lower != prev_upper:
                raise AssertionError(f"bucket {i} lower {d.lower} != previous upper {prev_upper}")
            prev_upper = d.upper
        if self.buckets and self.buckets[-1].upper is not None:
            raise AssertionError("last bucket must end at +inf")


def compute_bucket_count(m: int, b: int) -> int:
    """Buckets per pass: floor((m-b)/(b+1)).

    The layout p*b + b + p <= m leaves one block-sized buffer per bucket,
    one input block, and room for the pivots.
    """
    if b <= 1:
        raise ParameterError(f"1 < b violated: b={b}")
    if 2 * b >= m:
        raise ParameterError(f"b < m/2 violated: b={b}, m={m}")
    p = (m - b) // (b + 1)
    assert p >= 1 and p * b + b + p <= m
    return p


def select_pivots(sample: list[int], p: int) -> list[int]:
    """Pivots at the even-division positions floor(i*s/p), i = 1..p-1.

    ``sample`` must already be sorted ascending.  Equal sample values may
    yield equal pivots; routing then sends everything to the lowest
    matching bucket and the stranded buckets come out empty.
    """
    s = len(sample)
    if p < 1:
        raise ParameterError(f"bucket count must be >= 1, got {p}")
    if s < p:
        raise ParameterError(f"sample too small: {s} < {p}")
    return [sample[(i * s) // p - 1] for i in range(1, p)]


def partition_pass(
    store: BlockStore,
    file_id: int,
    params: IoParams,
    rng: random.Random | None = None,
    lower: int | None = None,
    upper: int | None = None,
) -> list[BucketDescriptor]:
    """Split one file into range buckets; consumes (deletes) the input file.

    Files smaller than memory are sorted outright into a single final
    bucket.  Otherwise the sample is read, pivots are chosen, and every
    item is routed in input order; full buffers flush as sorted blocks and
    partial buffers flush at the end.  ``rng`` is accepted for
    interface stability; sampling itself is deterministic (first blocks).
    """
    del rng  # sampling reads the leading blocks; no randomness consumed
    m, b = params.m, params.b
    size = store.file_size(file_id)
    nblocks = store.num_blocks(file_id)
    ws = Workspace(m)

    if size < m:
        keys: list[int] = []
        for i in range(nblocks):
            keys.extend(store.read_block(file_id, i, ws))
        keys.sort()
        out = store.create_file()
        for off in range(0, size, b):
            store.write_block(out, keys[off : off + b], ws)
        store.delete_file(file_id)
        return [BucketDescriptor(out, lower, upper, size, True)]

    p = compute_bucket_count(m, b)
    sample_blocks = min(m // b, nblocks)
    sample: list[int] = []
    for i in range(sample_blocks):
        sample.extend(store.read_block(file_id, i, ws))
    pivots = select_pivots(sorted(sample), p)

    files = [store.create_file() for _ in range(p)]
    buffers: list[list[int]] = [[] for _ in range(p)]
    counts = [0] * p

    def flush(i: int) -> None:
        buffers[i].sort()
        store.write_block(files[i], buffers[i], ws)
        buffers[i] = []

    def route(key: int) -> None:
        i = bisect_left(pivots, key)  # first bucket whose upper bound admits key
        buffers[i].append(key)
        counts[i] += 1
        if len(buffers[i]) == b:
            flush(i)

    for key in sample:  # original input order, items already in memory
        route(key)
    for i in range(sample_blocks, nblocks):
        for key in store.read_block(file_id, i, ws):
            route(key)
    for i in range(p):
        if buffers[i]:
            flush(i)
    store.delete_file(file_id)

    uppers: list[int | None] = list(pivots) + [upper]
    out_buckets: list[BucketDescriptor] = []
    pending_lower = lower
    for i in range(p):
        if counts[i] == 0:
            store.delete_file(files[i])  # empty range folds into its neighbour
            continue
        out_buckets.append(BucketDescriptor(files[i], pending_lower, uppers[i], counts[i], False))
        pending_lower = uppers[i]
    # the last kept bucket absorbs any trailing empty ranges
    last = out_buckets[-1]
    out_buckets[-1] = BucketDescriptor(last.file, last.lower, upper, last.count, last.fully_sorted)
    return out_buckets


def easort(store: BlockStore, input_file: int, params: IoParams, cfg: EasortConfig) -> ApproxRun:
    """Run up to cfg.k partition passes breadth-first over all live buckets.

    Buckets already fully sorted are never reprocessed; the run ends early
    once every bucket is final.  The concatenation of the returned bucket
    files holds exactly the input key multiset.
    """
    rng = random.Random(cfg.seed)
    current = [
        BucketDescriptor(input_file, None, None, store.file_size(input_file), False)
    ]
    passes = 0
    for _ in range(cfg.k):
        if all(d.fully_sorted for d in current):
            break
        nxt: list[BucketDescriptor] = []
        for d in current:
            if d.fully_sorted:
                nxt.append(d)
            else:
                nxt.extend(partition_pass(store, d.file, params, rng, d.lower, d.upper))
        current = nxt
        passes += 1
    return ApproxRun(tuple(current), params, passes)


def collect_keys(store: BlockStore, run: ApproxRun) -> list[int]:
    """Concatenate the bucket files in range order (reads are charged)."""
    ws = Workspace(run.params.m)
    out: list[int] = []
    for d in run.buckets:
        for i in range(store.num_blocks(d.file)):
            block = store.read_block(d.file, i, ws)
            out.extend(block)
            ws.release(len(block))
    return out


def materialize(store: BlockStore, run: ApproxRun) -> Permutation:
    """The run's key sequence as a rank permutation, for distortion measurement."""
    return permutation_from_keys(collect_keys(store, run))


def run_manifest(run: ApproxRun) -> str:
    """One tab-separated line per bucket: file, lower, upper, count, sorted flag."""
    lines = []
    for d in run.buckets:
        lo = "-inf" if d.lower is None else str(d.lower)
        hi = "+inf" if d.upper is None else str(d.upper)
        lines.append(f"{d.file}\t{lo}\t{hi}\t{d.count}\t{1 if d.fully_sorted else 0}")
    return "\n".join(lines) + "\n"
