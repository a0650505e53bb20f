"""Blocked, file-backed streams of fixed-size items with exact I/O counting.

File layout::

    offset 0   8 bytes   magic b"EMSTREAM"
    offset 8   u32 LE    item size in bytes
    offset 12  u32 LE    reserved, always 0
    offset 16  u64 LE    number of items
    offset 24  items, packed back to back

Items are grouped into logical blocks of ``block_size_items``; every block
transfer between the file and the single in-memory buffer of a stream is
counted as one block read or write.  Counters are process-wide.
"""
import os
import struct
import threading
from dataclasses import dataclass, fields

from . import memory
from .errors import EndOfStream, StreamError, StreamFormatError

MAGIC = b"EMSTREAM"
HEADER = struct.Struct("<8sIIQ")
HEADER_SIZE = HEADER.size  # 24

READ = "read"
WRITE = "write"
READ_WRITE = "read-write"
_MODES = (READ, WRITE, READ_WRITE)


@dataclass(frozen=True)
class BlockConfig:
    block_size_items: int = 4096
    memory_limit_bytes: int = memory.DEFAULT_LIMIT
    item_size_bytes: int = 8

    def __post_init__(self):
        if self.block_size_items < 1:
            raise ValueError("block_size_items must be >= 1")
        if self.item_size_bytes < 1:
            raise ValueError("item_size_bytes must be >= 1")
        if self.memory_limit_bytes < 2 * self.block_bytes:
            raise ValueError(
                f"memory_limit_bytes {self.memory_limit_bytes} cannot hold an input "
                f"and an output block of {self.block_bytes} bytes"
            )

    @property
    def block_bytes(self):
        return self.block_size_items * self.item_size_bytes

    def with_item_size(self, item_size_bytes):
        return BlockConfig(self.block_size_items, self.memory_limit_bytes, item_size_bytes)


@dataclass
class IoCounters:
    items_read: int = 0
    items_written: int = 0
    blocks_read: int = 0
    blocks_written: int = 0

    def __add__(self, other):
        return IoCounters(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def __sub__(self, other):
        return IoCounters(*(getattr(self, f.name) - getattr(other, f.name) for f in fields(self)))


class _Registry:
    """Process-wide counters: totals of retired streams plus every live stream."""

    def __init__(self):
        self.lock = threading.Lock()
        self.base = IoCounters()
        self.live = set()

    def snapshot(self):
        with self.lock:
            total = IoCounters(**vars(self.base))
            for s in self.live:
                total.items_read += s._items_read
                total.items_written += s._items_written
                total.blocks_read += s._blocks_read
                total.blocks_written += s._blocks_written
            return total

    def reset(self):
        with self.lock:
            self.base = IoCounters()
            for s in self.live:
                s._items_read = s._items_written = 0
                s._blocks_read = s._blocks_written = 0

    def retire(self, s):
        with self.lock:
            self.live.discard(s)
            self.base.items_read += s._items_read
            self.base.items_written += s._items_written
            self.base.blocks_read += s._blocks_read
            self.base.blocks_written += s._blocks_written
            s._items_read = s._items_written = s._blocks_read = s._blocks_written = 0


_registry = _Registry()


def snapshot_counters():
    return _registry.snapshot()


def reset_counters():
    _registry.reset()


def scan_io_bound(n, b):
    """Block transfers needed to scan ``n`` items with blocks of ``b`` items."""
    if b < 1:
        raise ValueError("block size must be >= 1")
    return -(-n // b)


# -- item codecs -------------------------------------------------------------

class _RawCodec:
    def __init__(self, size):
        self.size = size

    def encode(self, items):
        for item in items:
            if len(item) != self.size:
                raise StreamError(f"item of {len(item)} bytes, expected {self.size}")
        return b"".join(items)

    def decode(self, data):
        s = self.size
        return [data[i:i + s] for i in range(0, len(data), s)]


class _StructCodec:
    def __init__(self, fmt):
        if fmt[0] not in "<>!=@":
            fmt = "<" + fmt
        self.st = struct.Struct(fmt)
        self.size = self.st.size
        self.scalar = len(self.st.unpack(bytes(self.size))) == 1
        self._fmt = fmt

    def encode(self, items):
        pack = self.st.pack
        if self.scalar:
            return b"".join([pack(v) for v in items])
        return b"".join([pack(*v) for v in items])

    def decode(self, data):
        if self.scalar:
            return [v for (v,) in self.st.iter_unpack(data)]
        return list(self.st.iter_unpack(data))


def make_codec(fmt=None, item_size=None):
    if fmt is None:
        if item_size is None:
            raise ValueError("need a struct format or an item size")
        return _RawCodec(item_size)
    return _StructCodec(fmt)


class StreamFile:
    """An open stream; create with :func:`open_stream`.

    A stream has one forward cursor (``read_item``) and one backward cursor
    (``read_item_back``, starting at the end).  In ``read-write`` mode writes
    always append.
    """

    def __init__(self, path, mode, config, fmt=None):
        if mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
        self.path = os.fspath(path)
        self.mode = mode
        self.codec = make_codec(fmt, config.item_size_bytes)
        if self.codec.size != config.item_size_bytes:
            raise ValueError(
                f"format {fmt!r} packs {self.codec.size} bytes, config says "
                f"{config.item_size_bytes}"
            )
        self.config = config
        self.item_size = config.item_size_bytes
        self.block_size = config.block_size_items
        self.cursor = 0
        self.back_cursor = 0
        self._length = 0
        self._items_read = self._items_written = 0
        self._blocks_read = self._blocks_written = 0
        # the one buffer holds either a fetched block or, while appending, the
        # unflushed tail block; it always covers items [_buf_start, _buf_end)
        self._buf = []
        self._buf_start = 0
        self._buf_end = 0
        self._dirty = False
        self._appending = mode == WRITE
        self._closed = False
        self._writable = mode != READ
        self._readable = mode != WRITE

        self._reserved = config.block_bytes
        memory.register_allocation(self._reserved)
        try:
            self._open_file()
        except BaseException:
            memory.release_allocation(self._reserved)
            raise
        with _registry.lock:
            _registry.live.add(self)

    def _open_file(self):
        try:
            if self.mode == WRITE:
                self._fh = open(self.path, "w+b")
                self._write_header()
            elif self.mode == READ:
                self._fh = open(self.path, "rb")
                self._read_header()
            else:
                if os.path.exists(self.path):
                    self._fh = open(self.path, "r+b")
                    self._read_header()
                else:
                    self._fh = open(self.path, "w+b")
                    self._write_header()
        except StreamError:
            self._fh.close()
            raise
        except OSError as exc:
            raise StreamError(f"cannot open {self.path!r} for {self.mode}: {exc}") from exc
        self.back_cursor = self._length
        self._buf_start = self._buf_end = self._length if self.mode == WRITE else 0

    def _write_header(self):
        self._fh.seek(0)
        self._fh.write(HEADER.pack(MAGIC, self.item_size, 0, self._length))

    def _read_header(self):
        raw = self._fh.read(HEADER_SIZE)
        if len(raw) != HEADER_SIZE:
            raise StreamFormatError(f"{self.path!r}: truncated header")
        magic, item_size, reserved, length = HEADER.unpack(raw)
        if magic != MAGIC:
            raise StreamFormatError(f"{self.path!r}: bad magic {magic!r}")
        if reserved != 0:
            raise StreamFormatError(f"{self.path!r}: reserved header field is {reserved}")
        if item_size != self.item_size:
            raise StreamFormatError(
                f"{self.path!r}: stored item size {item_size} != requested {self.item_size}"
            )
        expected = HEADER_SIZE + length * item_size
        actual = os.fstat(self._fh.fileno()).st_size
        if actual < expected:
            raise StreamFormatError(
                f"{self.path!r}: header claims {length} items but file holds "
                f"{(actual - HEADER_SIZE) // item_size}"
            )
        self._length = length

    @property
    def length_items(self):
        return self._length

    @property
    def closed(self):
        return self._closed

    def __len__(self):
        return self._length

    def __repr__(self):
        return (
            f"StreamFile({self.path!r}, mode={self.mode!r}, length_items={self._length}, "
            f"cursor={self.cursor})"
        )

    # -- block transfer ------------------------------------------------------

    def _check_open(self):
        if self._closed:
            raise StreamError(f"{self.path!r}: stream is closed")

    def _flush(self):
        if not self._dirty:
            return
        try:
            data = self.codec.encode(self._buf)
        except struct.error as exc:
            raise StreamError(f"{self.path!r}: cannot encode item: {exc}") from exc
        try:
            self._fh.seek(HEADER_SIZE + self._buf_start * self.item_size)
            self._fh.write(data)
        except OSError as exc:
            raise StreamError(f"{self.path!r}: write failed: {exc}") from exc
        self._blocks_written += 1
        self._dirty = False

    def _fetch(self, block):
        if self._dirty:
            self._flush()
        start = block * self.block_size
        count = min(self.block_size, self._length - start)
        self._fh.seek(HEADER_SIZE + start * self.item_size)
        data = self._fh.read(count * self.item_size)
        if len(data) != count * self.item_size:
            raise StreamFormatError(f"{self.path!r}: short read in block {block}")
        self._buf = self.codec.decode(data)
        self._buf_start = start
        self._buf_end = start + count
        self._appending = False
        self._blocks_read += 1

    def _prepare_append(self):
        # position the buffer on the (possibly partial) last block
        self._flush()
        tail = (self._length // self.block_size) * self.block_size
        if tail < self._length:
            self._fetch(tail // self.block_size)
        else:
            self._buf = []
            self._buf_start = self._buf_end = tail
        self._appending = True

    # -- item access -----------------------------------------------------------

    def write_item(self, item):
        if not self._writable or self._closed:
            self._check_open()
            raise StreamError(f"{self.path!r}: stream opened read-only")
        if not self._appending:
            self._prepare_append()
        buf = self._buf
        buf.append(item)
        self._dirty = True
        self._length += 1
        self._buf_end = self._length
        self._items_written += 1
        if len(buf) >= self.block_size:
            self._flush()
            self._buf = []
            self._buf_start = self._buf_end = self._length

    def write_items(self, items):
        for item in items:
            self.write_item(item)

    def read_item(self):
        i = self.cursor
        if i >= self._length:
            self._check_open()
            if not self._readable:
                raise StreamError(f"{self.path!r}: stream opened write-only")
            raise EndOfStream(f"{self.path!r}: read past end ({self._length} items)")
        if not self._readable:
            raise StreamError(f"{self.path!r}: stream opened write-only")
        if i < self._buf_start or i >= self._buf_end:
            self._check_open()
            self._fetch(i // self.block_size)
        self.cursor = i + 1
        self._items_read += 1
        return self._buf[i - self._buf_start]

    def read_item_back(self):
        i = self.back_cursor - 1
        if i < 0:
            self._check_open()
            raise EndOfStream(f"{self.path!r}: read before beginning")
        if not self._readable:
            raise StreamError(f"{self.path!r}: stream opened write-only")
        if i < self._buf_start or i >= self._buf_end:
            self._check_open()
            self._fetch(i // self.block_size)
        self.back_cursor = i
        self._items_read += 1
        return self._buf[i - self._buf_start]

    def can_read(self):
        return self.cursor < self._length

    def can_read_back(self):
        return self.back_cursor > 0

    def seek(self, position):
        if not 0 <= position <= self._length:
            raise StreamError(f"{self.path!r}: seek to {position} outside [0, {self._length}]")
        self.cursor = position

    def __iter__(self):
        """Read forward from the cursor to the end, a block at a time."""
        if not self._readable:
            raise StreamError(f"{self.path!r}: stream opened write-only")
        while self.cursor < self._length:
            i = self.cursor
            if i < self._buf_start or i >= self._buf_end:
                self._check_open()
                self._fetch(i // self.block_size)
            chunk = self._buf[i - self._buf_start:]
            done = 0
            try:
                for item in chunk:
                    done += 1  # counted once handed out
                    yield item
            finally:
                self.cursor = i + done
                self._count_read(done)

    def _count_read(self, n):
        if self._closed:
            # an iterator finalized after close(): the stream is already retired
            with _registry.lock:
                _registry.base.items_read += n
        else:
            self._items_read += n

    # -- lifecycle -------------------------------------------------------------

    def close(self):
        if self._closed:
            return
        try:
            if self._writable:
                self._flush()
                self._write_header()
            self._fh.close()
        finally:
            self._closed = True
            self._buf = []
            memory.release_allocation(self._reserved)
            _registry.retire(self)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_stream(path, mode, config, fmt=None):
    """Open ``path`` as a blocked item stream.

    ``fmt`` is an optional :mod:`struct` format describing one item; without
    it items are raw ``bytes`` of ``config.item_size_bytes``.  Single-field
    formats read back as scalars, multi-field formats as tuples.
    """
    return StreamFile(path, mode, config, fmt)


def item_size(fmt):
    if fmt[0] not in "<>!=@":
        fmt = "<" + fmt
    return struct.calcsize(fmt)
