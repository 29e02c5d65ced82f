"""Equijoins where one or both inputs are approximate-sorted.

Tuples are (key, id) pairs packed into single u64 storage items with the
id in the low bits, so storage order is key-major and every copy of a key
routes consistently.  A bucket is "m-tolerable" when it fits in memory
with two blocks spared for streaming input and output; per bucket the
one-side join dispatches:

  case 1  bucket tolerable: load and sort it, merge against the sorted
          side's forward-only cursor;
  case 2  bucket too big but the sorted side's slice under the bucket's
          key range fits: load the slice, stream the bucket once;
  case 3  neither fits: load as much slice as possible, stream the bucket,
          spill still-unresolvable tuples to a temp file, and iterate with
          the next slice window over the shrinking temp file.

The sorted side is read strictly forward in all cases; tuples whose key
sits exactly on a bucket boundary are carried in memory across it, never
re-read.  The two-side join loads whichever bucket of an overlapping pair
is tolerable and streams the other, batching the larger side through
memory when neither fits.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import Counter, deque
from dataclasses import dataclass, field

from easort.iosim import BlockStore, IoParams, ParameterError, Workspace
from easort.sorting import ApproxRun, BucketDescriptor, EasortConfig, easort

ID_BITS = 24
MAX_ID = (1 << ID_BITS) - 1
MAX_JOIN_KEY = (1 << (64 - ID_BITS)) - 1


def pack_tuple(key: int, tid: int) -> int:
    if not 0 <= key <= MAX_JOIN_KEY:
        raise ParameterError(f"join key {key} outside 0..{MAX_JOIN_KEY}")
    if not 0 <= tid <= MAX_ID:
        raise ParameterError(f"tuple id {tid} outside 0..{MAX_ID}")
    return (key << ID_BITS) | tid


def unpack_tuple(value: int) -> tuple[int, int]:
    return value >> ID_BITS, value & MAX_ID


def key_of(value: int) -> int:
    return value >> ID_BITS


def id_of(value: int) -> int:
    return value & MAX_ID


@dataclass(frozen=True)
class SortedRelation:
    """A store file of packed tuples in globally nondecreasing order."""

    file: int
    count: int


@dataclass(frozen=True)
class RunRelation:
    """An approximate-sorted relation: the bucketed output of the sorter."""

    run: ApproxRun


def make_sorted_relation(store: BlockStore, pairs) -> SortedRelation:
    packed = sorted(pack_tuple(k, i) for k, i in pairs)
    fid = store.install_file(packed)
    return SortedRelation(fid, len(packed))


def make_run_relation(store: BlockStore, pairs, k: int = 1, seed: int = 0) -> RunRelation:
    """Install the tuples in given order and approximate-sort them."""
    packed = [pack_tuple(kk, i) for kk, i in pairs]
    if not packed:
        return RunRelation(ApproxRun((), store.params, 0))
    fid = store.install_file(packed)
    run = easort(store, fid, store.params, EasortConfig(k=k, seed=seed))
    return RunRelation(run)


def is_m_tolerable(bucket: BucketDescriptor, m: int, b: int) -> bool:
    """True when the bucket fits in memory with two blocks to spare."""
    blocks_needed = -(-bucket.count // b)
    return blocks_needed <= m // b - 2


@dataclass
class JoinStats:
    reads: int = 0
    writes: int = 0
    temp_reads: int = 0
    temp_writes: int = 0
    case_counts: Counter = field(default_factory=Counter)
    temp_traces: list[list[int]] = field(default_factory=list)
    sr_block_trace: list[int] = field(default_factory=list)
    rescans: int = 0


@dataclass
class JoinResult:
    """Matched (left id, right id) pairs plus the I/O spent producing them."""

    pairs: list[tuple[int, int]]
    stats: JoinStats
    result_file: int | None = None

    def pair_multiset(self) -> Counter:
        return Counter(self.pairs)


def _write_result(store: BlockStore, ws: Workspace, pairs, stats: JoinStats) -> int | None:
    """Flush the match list to a store file of packed id pairs (charged)."""
    if not pairs:
        return None
    fid = store.create_file()
    b = store.params.b
    packed = [(a << ID_BITS) | s for a, s in pairs]
    for off in range(0, len(packed), b):
        chunk = packed[off : off + b]
        ws.acquire(len(chunk))
        store.write_block(fid, chunk, ws)
        stats.writes += 1
    return fid


class _SrCursor:
    """Forward-only reader of the sorted relation with an in-memory carry."""

    def __init__(self, store: BlockStore, rel: SortedRelation, ws: Workspace,
                 stats: JoinStats):
        self.store = store
        self.rel = rel
        self.ws = ws
        self.stats = stats
        self.next_block = 0
        self.nblocks = store.num_blocks(rel.file) if rel.count else 0
        self.buffer: deque[int] = deque()
        self._last = -1

    def eof(self) -> bool:
        return self.next_block >= self.nblocks

    def read_next(self) -> bool:
        if self.eof():
            return False
        block = self.store.read_block(self.rel.file, self.next_block, self.ws)
        self.stats.reads += 1
        self.stats.sr_block_trace.append(self.next_block)
        for v in block:
            if v < self._last:
                raise ParameterError("sorted relation is not sorted")
            self._last = v
        self.buffer.extend(block)
        self.next_block += 1
        return True


def _load_bucket(store: BlockStore, bucket: BucketDescriptor, ws: Workspace,
                 stats: JoinStats) -> list[int]:
    data: list[int] = []
    for i in range(store.num_blocks(bucket.file)):
        data.extend(store.read_block(bucket.file, i, ws))
        stats.reads += 1
    data.sort()
    return data


def _emit_matches(loaded: list[int], loaded_keys: list[int], probe: int,
                  pairs: list[tuple[int, int]], left_is_loaded: bool) -> None:
    """Append id pairs for every loaded tuple whose key equals the probe's."""
    k = key_of(probe)
    lo = bisect_left(loaded_keys, k)
    hi = bisect_right(loaded_keys, k)
    pid = id_of(probe)
    for v in loaded[lo:hi]:
        if left_is_loaded:
            pairs.append((id_of(v), pid))
        else:
            pairs.append((pid, id_of(v)))


def join_asr_sr(store: BlockStore, asr: RunRelation, sr: SortedRelation,
                params: IoParams | None = None, *, alt_rescan: bool = False) -> JoinResult:
    """Equijoin of an approximate-sorted relation against a sorted one.

    Result pairs are (asr tuple id, sr tuple id); the multiset equals the
    brute-force equijoin.  ``alt_rescan`` switches non-tolerable buckets to
    the dominated strategy that re-scans the sorted side per memory batch
    instead of spilling temp files (for experiments only).
    """
    params = params or store.params
    m, b = params.m, params.b
    ws = Workspace(m)
    stats = JoinStats()
    pairs: list[tuple[int, int]] = []
    if alt_rescan:
        _one_side_alt_rescan(store, asr, sr, m, b, ws, stats, pairs)
    else:
        cur = _SrCursor(store, sr, ws, stats)
        for bucket in asr.run.buckets:
            kappa = None if bucket.upper is None else key_of(bucket.upper)
            if is_m_tolerable(bucket, m, b):
                stats.case_counts["one_side_case1"] += 1
                _one_side_case1(store, bucket, kappa, cur, ws, stats, pairs)
            else:
                _one_side_case23(store, bucket, kappa, cur, m, b, ws, stats, pairs)
        ws.release(len(cur.buffer))
    rfile = _write_result(store, ws, pairs, stats)
    return JoinResult(pairs, stats, rfile)


def _one_side_case1(store, bucket, kappa, cur: _SrCursor, ws, stats, pairs) -> None:
    data = _load_bucket(store, bucket, ws, stats)
    dkeys = [key_of(v) for v in data]
    boundary: list[int] = []  # boundary-key tuples stay resident for the next bucket
    while True:
        if not cur.buffer and not cur.read_next():
            break
        v = cur.buffer[0]
        if kappa is not None and key_of(v) > kappa:
            break
        _emit_matches(data, dkeys, v, pairs, left_is_loaded=True)
        cur.buffer.popleft()
        if kappa is not None and key_of(v) == kappa:
            boundary.append(v)
        else:
            ws.release(1)
    for v in reversed(boundary):
        cur.buffer.appendleft(v)
    ws.release(len(data))


def _fill_window(cur: _SrCursor, window: list[int], kappa: int | None,
                 cap: int) -> bool:
    """Move slice tuples from the cursor into the window, up to cap items.

    Returns True once the slice is known to be fully covered (the window
    or cursor holds a tuple beyond the bucket range, or the file ended).
    """
    while True:
        if not cur.buffer:
            if not cur.read_next():
                return True
        # move whole buffered blocks while room remains
        if len(window) + len(cur.buffer) <= cap:
            tail_key = key_of(cur.buffer[-1])
            window.extend(cur.buffer)
            cur.buffer.clear()
            if kappa is not None and tail_key > kappa:
                return True
            continue
        return False  # window full, slice continues


def _one_side_case23(store, bucket, kappa, cur: _SrCursor, m, b, ws, stats,
                     pairs) -> None:
    cap = m - 3 * b  # window reserve: input block, temp buffer, carry/result
    window: list[int] = []
    slice_done = _fill_window(cur, window, kappa, cap)
    if slice_done:
        stats.case_counts["one_side_case2"] += 1
    else:
        stats.case_counts["one_side_case3"] += 1
    wkeys = [key_of(v) for v in window]

    trace: list[int] = []
    input_file = bucket.file
    input_blocks = store.num_blocks(input_file)
    input_is_temp = False
    min_input: int | None = None  # smallest key in the current input, once known

    while True:
        if min_input is not None:
            # evict window tuples that can no longer match anything
            cut = bisect_left(wkeys, min_input)
            if cut:
                ws.release(cut)
                del window[:cut]
                del wkeys[:cut]
            while not slice_done and (not wkeys or wkeys[-1] <= min_input):
                before = len(window)
                slice_done = _fill_window(cur, window, kappa, cap)
                wkeys = [key_of(v) for v in window]
                if not slice_done and len(window) == before:
                    # a single-key group larger than the window: unsupported skew
                    raise ParameterError(
                        "join stalled: one key's sorted-side group exceeds the memory window"
                    )
        w_max = wkeys[-1] if wkeys else None

        temp_file = store.create_file()
        temp_buf: list[int] = []
        spilled = 0
        resolved = 0
        min_spilled: int | None = None

        def spill(v: int) -> None:
            nonlocal spilled, min_spilled
            temp_buf.append(v)
            spilled += 1
            kv = key_of(v)
            if min_spilled is None or kv < min_spilled:
                min_spilled = kv
            if len(temp_buf) == b:
                store.write_block(temp_file, temp_buf, ws)
                stats.temp_writes += 1
                stats.writes += 1
                temp_buf.clear()

        for i in range(input_blocks):
            block = store.read_block(input_file, i, ws)
            stats.reads += 1
            if input_is_temp:
                stats.temp_reads += 1
            kept = 0
            for v in block:
                kv = key_of(v)
                if slice_done or (w_max is not None and kv < w_max):
                    _emit_matches(window, wkeys, v, pairs, left_is_loaded=False)
                    resolved += 1
                elif w_max is not None and kv == w_max:
                    # matches so far are valid, but later slice blocks may
                    # still hold this key; resolve the window part, respill
                    _emit_matches(window, wkeys, v, pairs, left_is_loaded=False)
                    spill(v)
                    kept += 1
                else:
                    spill(v)
                    kept += 1
            ws.release(len(block) - kept)

        if temp_buf:
            store.write_block(temp_file, temp_buf, ws)
            stats.temp_writes += 1
            stats.writes += 1
            temp_buf = []
        if input_is_temp:
            store.delete_file(input_file)

        if spilled == 0:
            store.delete_file(temp_file)
            break
        if resolved == 0 and not input_is_temp:
            # nothing resolved on the first sweep: the whole slice window sits
            # below the bucket's smallest key; advance it and sweep again
            store.delete_file(temp_file)
            min_input = min_spilled
            continue
        trace.append(spilled)
        input_file = temp_file
        input_blocks = store.num_blocks(temp_file)
        input_is_temp = True
        min_input = min_spilled

    if trace:
        stats.temp_traces.append(trace)
    # demote the window: keep boundary and beyond-range tuples for later buckets
    if kappa is None:
        ws.release(len(window))
    else:
        cut = bisect_left(wkeys, kappa)
        ws.release(cut)
        for v in reversed(window[cut:]):
            cur.buffer.appendleft(v)
    window.clear()


def _one_side_alt_rescan(store, asr: RunRelation, sr: SortedRelation, m, b,
                         ws, stats, pairs) -> None:
    """Dominated variant: batch each oversized bucket and re-scan the slice.

    Positional slices over the sorted file; every batch of a non-tolerable
    bucket re-reads the bucket's whole slice, so block reads need not be
    monotone here.
    """
    sr_blocks = store.num_blocks(sr.file) if sr.count else 0
    slice_start = 0
    batch_blocks = max(1, (m - 2 * b) // b)
    for bucket in asr.run.buckets:
        stats.case_counts["one_side_alt"] += 1
        kappa = None if bucket.upper is None else key_of(bucket.upper)
        nblocks = store.num_blocks(bucket.file)
        next_start: int | None = None
        stop = slice_start
        for bi, lo_blk in enumerate(range(0, nblocks, batch_blocks)):
            if bi:
                stats.rescans += 1
            data: list[int] = []
            for i in range(lo_blk, min(nblocks, lo_blk + batch_blocks)):
                data.extend(store.read_block(bucket.file, i, ws))
                stats.reads += 1
            data.sort()
            dkeys = [key_of(v) for v in data]
            j = slice_start
            while j < sr_blocks:
                block = store.read_block(sr.file, j, ws)
                stats.reads += 1
                stats.sr_block_trace.append(j)
                for v in block:
                    if kappa is None or key_of(v) <= kappa:
                        _emit_matches(data, dkeys, v, pairs, left_is_loaded=True)
                tail = key_of(block[-1])
                ws.release(len(block))
                j += 1
                # the next bucket must restart at the first block that can
                # still hold its boundary key
                if next_start is None and kappa is not None and tail >= kappa:
                    next_start = j - 1
                if kappa is not None and tail > kappa:
                    break
            stop = j
            ws.release(len(data))
        slice_start = stop if next_start is None else next_start


def join_asr_asr(store: BlockStore, left: RunRelation, right: RunRelation,
                 params: IoParams | None = None) -> JoinResult:
    """Equijoin of two approximate-sorted relations.

    For each bucket of the left run, every right bucket whose key range
    crosses it is visited: the tolerable side is loaded and the other
    streamed (case 1), and when neither fits the larger bucket is batched
    through memory a memory-load at a time (case 2).  Buckets crossed by
    several opposing buckets are re-scanned as often as needed.
    """
    params = params or store.params
    m, b = params.m, params.b
    ws = Workspace(m)
    stats = JoinStats()
    pairs: list[tuple[int, int]] = []

    def key_range(d: BucketDescriptor) -> tuple[int | None, int | None]:
        lo = None if d.lower is None else key_of(d.lower)
        hi = None if d.upper is None else key_of(d.upper)
        return lo, hi

    def overlaps(a: BucketDescriptor, c: BucketDescriptor) -> bool:
        alo, ahi = key_range(a)
        clo, chi = key_range(c)
        if ahi is not None and clo is not None and ahi < clo:
            return False
        if chi is not None and alo is not None and chi < alo:
            return False
        return True

    right_buckets = list(right.run.buckets)
    seen_right: set[int] = set()

    def stream_against(loaded: list[int], lkeys: list[int], d: BucketDescriptor,
                       loaded_is_left: bool) -> None:
        for i in range(store.num_blocks(d.file)):
            block = store.read_block(d.file, i, ws)
            stats.reads += 1
            for v in block:
                _emit_matches(loaded, lkeys, v, pairs, left_is_loaded=loaded_is_left)
            ws.release(len(block))

    for a in left.run.buckets:
        crossing = [d for d in right_buckets if overlaps(a, d)]
        if not crossing:
            continue
        if is_m_tolerable(a, m, b):
            stats.case_counts["two_side_case1"] += 1
            data = _load_bucket(store, a, ws, stats)
            dkeys = [key_of(v) for v in data]
            for d in crossing:
                if id(d) in seen_right:
                    stats.rescans += 1
                seen_right.add(id(d))
                stream_against(data, dkeys, d, loaded_is_left=True)
            ws.release(len(data))
            continue
        for d in crossing:
            if id(d) in seen_right:
                stats.rescans += 1
            seen_right.add(id(d))
            if is_m_tolerable(d, m, b):
                stats.case_counts["two_side_case1"] += 1
                data = _load_bucket(store, d, ws, stats)
                dkeys = [key_of(v) for v in data]
                stream_against(data, dkeys, a, loaded_is_left=False)
                ws.release(len(data))
            else:
                stats.case_counts["two_side_case2"] += 1
                _two_side_case2(store, a, d, m, b, ws, stats, pairs)

    rfile = _write_result(store, ws, pairs, stats)
    return JoinResult(pairs, stats, rfile)


def _two_side_case2(store, a: BucketDescriptor, d: BucketDescriptor, m, b, ws,
                    stats, pairs) -> None:
    """Neither bucket fits: batch the larger one, stream the smaller per batch."""
    big, small, big_is_left = (a, d, True) if a.count >= d.count else (d, a, False)
    cap_blocks = max(1, (m - 2 * b) // b)
    nblocks = store.num_blocks(big.file)
    for start in range(0, nblocks, cap_blocks):
        if start:
            stats.rescans += 1
        data: list[int] = []
        for i in range(start, min(nblocks, start + cap_blocks)):
            data.extend(store.read_block(big.file, i, ws))
            stats.reads += 1
        data.sort()
        dkeys = [key_of(v) for v in data]
        for i in range(store.num_blocks(small.file)):
            block = store.read_block(small.file, i, ws)
            stats.reads += 1
            for v in block:
                _emit_matches(data, dkeys, v, pairs, left_is_loaded=big_is_left)
            ws.release(len(block))
        ws.release(len(data))


def predicted_join_cost(shape: str, n1: int, n2: int, m: int, b: int, p: int,
                        k: int, n_bk: int = 1) -> dict[str, float]:
    """Best and worst case block-I/O envelopes (all hidden constants 1).

    One-side worst replaces the scan term with (n1/b) * n2/(m p^k); the
    two-side worst multiplies the right-hand scan by the crossing-bucket
    count n_bk.  Envelopes, not measurements.
    """
    import math

    if min(n1, n2, m, b, p) < 0 or b == 0:
        raise ParameterError("sizes must be nonnegative and b positive")
    sort_sr = (n2 / b) * math.log2(n2 / b) if n2 > b else 0.0
    if shape == "one-side":
        best = n1 / b + n2 / b + k * n1 / b + sort_sr
        worst = (n1 / b) * (n2 / (m * p**k)) + n2 / b + k * n1 / b + sort_sr
    elif shape == "two-side":
        best = n1 / b + n2 / b + k * n1 / b + k * n2 / b
        worst = n1 / b + n_bk * (n2 / b) + k * n1 / b + k * n2 / b
    else:
        raise ParameterError(f"unknown join shape {shape!r}")
    return {"best": best, "worst": worst}
