"""Simulated external memory: block files, a memory budget, and I/O counters.

The device stores files as ordered lists of blocks holding at most ``b``
unsigned 64-bit keys; only a file's final block may be partial.  Every
block transfer in either direction costs exactly one I/O and is tallied in
``IoStats``; the total ``t = reads + writes`` is the cost measure all
analysis is phrased in.  A ``Workspace`` models the m-item internal
memory: ``read_block`` acquires space for the incoming block,
``write_block`` releases space for the outgoing one, and any attempt to
exceed the budget raises rather than silently succeeding.

File creation and deletion are metadata operations and cost no I/O.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

MAGIC = b"EASK"
FORMAT_VERSION = 1
MAX_KEY = 2**64 - 1


class ParameterError(ValueError):
    """Invalid model parameters (maps to CLI exit code 2)."""


class StorageError(RuntimeError):
    """Illegal operation against the simulated device."""


class MemoryBudgetError(StorageError):
    """The m-item internal memory budget would be exceeded."""


@dataclass(frozen=True)
class IoParams:
    """The model parameters: n items total, m items of memory, b items per block.

    Valid parameters satisfy 1 < b < m/2 and m < n.
    """

    n: int
    m: int
    b: int

    def __post_init__(self) -> None:
        if self.b <= 1:
            raise ParameterError(f"1 < b violated: b={self.b}")
        if 2 * self.b >= self.m:
            raise ParameterError(f"b < m/2 violated: b={self.b}, m={self.m}")
        if self.m >= self.n:
            raise ParameterError(f"m < n violated: m={self.m}, n={self.n}")


@dataclass
class IoStats:
    """Monotone counters of block transfers."""

    reads: int = 0
    writes: int = 0

    @property
    def t(self) -> int:
        return self.reads + self.writes

    def snapshot(self) -> tuple[int, int]:
        return (self.reads, self.writes)


class Workspace:
    """Tracks how many items currently reside in internal memory."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ParameterError(f"workspace capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.resident = 0

    def acquire(self, items: int) -> None:
        if self.resident + items > self.capacity:
            raise MemoryBudgetError(
                f"memory budget exceeded: {self.resident} + {items} > {self.capacity}"
            )
        self.resident += items

    def release(self, items: int) -> None:
        if items > self.resident:
            raise StorageError(f"workspace underflow: releasing {items} of {self.resident}")
        self.resident -= items


class BlockStore:
    """An in-memory block device with per-file append-only block lists."""

    def __init__(self, params: IoParams):
        self.params = params
        self.stats = IoStats()
        self._files: dict[int, list[list[int]]] = {}
        self._sizes: dict[int, int] = {}
        self._next_id = 0

    # -- metadata operations (free) ------------------------------------

    def create_file(self) -> int:
        fid = self._next_id
        self._next_id += 1
        self._files[fid] = []
        self._sizes[fid] = 0
        return fid

    def has_file(self, fid: int) -> bool:
        return fid in self._files

    def file_ids(self) -> list[int]:
        return sorted(self._files)

    def num_blocks(self, fid: int) -> int:
        return len(self._blocks(fid))

    def file_size(self, fid: int) -> int:
        """Total key count of the file."""
        self._blocks(fid)
        return self._sizes[fid]

    def delete_file(self, fid: int) -> None:
        self._blocks(fid)
        del self._files[fid]
        del self._sizes[fid]

    def _blocks(self, fid: int) -> list[list[int]]:
        try:
            return self._files[fid]
        except KeyError:
            raise StorageError(f"unknown file {fid}") from None

    # -- charged operations ---------------------------------------------

    def read_block(self, fid: int, index: int, ws: Workspace) -> list[int]:
        """Transfer one block into memory; costs one read."""
        blocks = self._blocks(fid)
        if not 0 <= index < len(blocks):
            raise StorageError(f"block index {index} out of range for file {fid}")
        block = blocks[index]
        ws.acquire(len(block))
        self.stats.reads += 1
        return list(block)

    def write_block(self, fid: int, keys, ws: Workspace) -> int:
        """Append one block to a file; costs one write; returns its index.

        Only the final block of a file may hold fewer than b keys, so
        appending to a file whose last block is partial is rejected.
        """
        blocks = self._blocks(fid)
        keys = list(keys)
        if not keys:
            raise StorageError("cannot write an empty block")
        if len(keys) > self.params.b:
            raise StorageError(f"block of {len(keys)} keys exceeds b={self.params.b}")
        for k in keys:
            if not 0 <= k <= MAX_KEY:
                raise StorageError(f"key {k} outside unsigned 64-bit range")
        if blocks and len(blocks[-1]) < self.params.b:
            raise StorageError(f"file {fid} already ends in a partial block")
        ws.release(len(keys))
        self.stats.writes += 1
        blocks.append(keys)
        self._sizes[fid] += len(keys)
        return len(blocks) - 1

    # -- bulk helpers (uncharged; for test/CLI setup only) ---------------

    def install_file(self, keys) -> int:
        """Create a file pre-loaded with keys, charging no I/O.

        Models input data that already resides on disk before the measured
        computation starts.
        """
        fid = self.create_file()
        b = self.params.b
        keys = list(keys)
        for k in keys:
            if not 0 <= k <= MAX_KEY:
                raise StorageError(f"key {k} outside unsigned 64-bit range")
        for off in range(0, len(keys), b):
            self._files[fid].append(keys[off : off + b])
        self._sizes[fid] = len(keys)
        return fid

    def export_files(self) -> dict[int, list[list[int]]]:
        return {fid: [list(blk) for blk in blocks] for fid, blocks in self._files.items()}


def create_store(params: IoParams) -> BlockStore:
    """An empty store with zeroed I/O counters."""
    return BlockStore(params)


# -- on-disk persistence ------------------------------------------------
#
# Little-endian binary: magic "EASK", u32 version, u64 n, u64 m, u64 b,
# then per file (ascending id): u64 file id, u64 block count, and each
# block as u32 key count followed by the keys as u64 values.


def write_store_file(path, n: int, m: int, b: int, files: dict[int, list[list[int]]]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<QQQ", n, m, b))
        for fid in sorted(files):
            blocks = files[fid]
            fh.write(struct.pack("<QQ", fid, len(blocks)))
            for blk in blocks:
                fh.write(struct.pack("<I", len(blk)))
                fh.write(struct.pack(f"<{len(blk)}Q", *blk))


def read_store_file(path) -> tuple[tuple[int, int, int], dict[int, list[list[int]]]]:
    """Returns ((n, m, b), files); header values are not validated here."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise StorageError(f"bad magic in {path!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise StorageError(f"unsupported format version {version}")
    n, m, b = struct.unpack_from("<QQQ", data, 8)
    off = 32
    files: dict[int, list[list[int]]] = {}
    while off < len(data):
        fid, nblocks = struct.unpack_from("<QQ", data, off)
        off += 16
        blocks = []
        for _ in range(nblocks):
            (cnt,) = struct.unpack_from("<I", data, off)
            off += 4
            blocks.append(list(struct.unpack_from(f"<{cnt}Q", data, off)))
            off += 8 * cnt
        files[fid] = blocks
    return (n, m, b), files


def save_store(store: BlockStore, path) -> None:
    p = store.params
    write_store_file(path, p.n, p.m, p.b, store.export_files())


def flatten_files(files: dict[int, list[list[int]]]) -> list[int]:
    """All keys of a read store image, in file-id then block order."""
    out: list[int] = []
    for fid in sorted(files):
        for blk in files[fid]:
            out.extend(blk)
    return out
