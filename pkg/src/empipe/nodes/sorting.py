"""External merge sort: run formation, merge passes and the sorter components.

Run formation buffers ``capacity`` items, sorts them in memory and writes
each batch to its own run file.  Merging repeatedly combines ``F`` runs at a
time while more than ``F`` remain; the last at most ``F`` runs are merged
lazily, one item per request, so the sorted output is never written by the
sorter itself.
"""
import os
import tempfile
from dataclasses import dataclass, field

from .. import kernels
from ..errors import ContractViolation
from ..memory import UNBOUNDED
from ..node import Node, Pipeable, link_blocking
from ..stream_io import BlockConfig, item_size, open_stream


@dataclass
class Run:
    path: str
    length: int


@dataclass
class RunSet:
    runs: list = field(default_factory=list)
    fmt: str = None
    config: BlockConfig = None
    key: object = None
    tmpdir: str = None

    def __len__(self):
        return len(self.runs)

    @property
    def total_items(self):
        return sum(r.length for r in self.runs)

    def discard(self):
        for run in self.runs:
            if os.path.exists(run.path):
                os.unlink(run.path)
        self.runs = []


def _temp_path(tmpdir, prefix):
    fd, path = tempfile.mkstemp(prefix=prefix, suffix=".ems", dir=tmpdir)
    os.close(fd)
    return path


def stream_config(fmt, block_size_items, memory_limit_bytes=None):
    size = item_size(fmt)
    limit = memory_limit_bytes or max(BlockConfig().memory_limit_bytes, 2 * block_size_items * size)
    return BlockConfig(block_size_items, limit, size)


def compute_fanout(grant, block_bytes, cap=None):
    """Runs merged at once: one block per run plus an output block, at least 2."""
    fanout = grant // block_bytes - 1
    if cap is not None:
        fanout = min(fanout, cap)
    return max(2, fanout)


class RunFormer:
    """Accepts items one at a time and spills sorted runs of ``capacity``."""

    def __init__(self, capacity, fmt, config, key=None, tmpdir=None):
        if capacity < 1:
            raise ValueError("run capacity must be >= 1")
        self.capacity = capacity
        self.runset = RunSet([], fmt, config, key, tmpdir)
        self.buf = []

    def add(self, item):
        buf = self.buf
        buf.append(item)
        if len(buf) >= self.capacity:
            self.spill()

    def spill(self):
        if not self.buf:
            return
        rs = self.runset
        self.buf.sort(key=rs.key)
        path = _temp_path(rs.tmpdir, "run-")
        with open_stream(path, "write", rs.config, rs.fmt) as out:
            write = out.write_item
            for item in self.buf:
                write(item)
        rs.runs.append(Run(path, len(self.buf)))
        self.buf = []

    def finish(self):
        self.spill()
        return self.runset


def run_formation(items, capacity, fmt, config, key=None, tmpdir=None):
    """Sort ``items`` into runs of at most ``capacity`` items."""
    former = RunFormer(capacity, fmt, config, key, tmpdir)
    add = former.add
    for item in items:
        add(item)
    return former.finish()


def _merge_into(runs, runset, path):
    streams = [open_stream(r.path, "read", runset.config, runset.fmt) for r in runs]
    try:
        with open_stream(path, "write", runset.config, runset.fmt) as out:
            write = out.write_item
            for item in kernels.kway_merge(streams, key=runset.key):
                write(item)
            length = out.length_items
    finally:
        for s in streams:
            s.close()
    for r in runs:
        os.unlink(r.path)
    return Run(path, length)


def merge_pass(runset, fanout):
    """Merge groups of ``fanout`` runs; every item is rewritten exactly once."""
    merged = []
    for i in range(0, len(runset.runs), fanout):
        group = runset.runs[i:i + fanout]
        merged.append(_merge_into(group, runset, _temp_path(runset.tmpdir, "merge-")))
    runset.runs = merged
    return runset


def reduce_runs(runset, fanout):
    """Apply full merge passes until at most ``fanout`` runs remain.

    Returns the number of passes performed.
    """
    if fanout < 2:
        raise ValueError("fanout must be >= 2")
    passes = 0
    while len(runset.runs) > fanout:
        merge_pass(runset, fanout)
        passes += 1
    return passes


def lazy_merge(runset):
    """Yield the items of at most ``fanout`` runs in sorted order, then delete them."""
    streams = []
    try:
        for r in runset.runs:
            streams.append(open_stream(r.path, "read", runset.config, runset.fmt))
        if len(streams) == 1:
            yield from streams[0]
        elif streams:
            yield from kernels.kway_merge(streams, key=runset.key)
    finally:
        for s in streams:
            s.close()
        runset.discard()


def merge(runset, fanout):
    """Reduce to at most ``fanout`` runs, then return the lazy final merge."""
    reduce_runs(runset, fanout)
    return lazy_merge(runset)


def expected_passes(run_count, fanout):
    """Full merge passes before the final lazy merge."""
    passes = 0
    while run_count > fanout:
        run_count = -(-run_count // fanout)
        passes += 1
    return passes


def external_sort(source, out_path, fmt, config, capacity, fanout, key=None, tmpdir=None):
    """Sort an iterable into a new stream file at ``out_path``; returns its length."""
    runset = run_formation(source, capacity, fmt, config, key, tmpdir)
    # full passes first: the output block is only needed by the final merge
    reduce_runs(runset, fanout)
    with open_stream(out_path, "write", config, fmt) as out:
        write = out.write_item
        for item in lazy_merge(runset):
            write(item)
        return out.length_items


# -- components ------------------------------------------------------------------

class _SortInput(Node):
    def __init__(self, sorter, name):
        super().__init__(name)
        self.sorter = sorter

    def prepare(self):
        s = self.sorter
        s.config = stream_config(s.fmt, self.context.block_size)
        self.set_minimum_memory(3 * s.config.block_bytes)
        self.set_maximum_memory(UNBOUNDED)

    def begin(self):
        s = self.sorter
        # one block of the grant is the run writer's buffer
        buf_bytes = self.get_available_memory() - s.config.block_bytes
        s.capacity = max(1, buf_bytes // s.config.item_size_bytes)
        self._former = RunFormer(s.capacity, s.fmt, s.config, s.key, self.context.tmpdir)
        self._buf = self._former.buf
        self._cap = s.capacity

    def push(self, item):
        buf = self._buf
        buf.append(item)
        if len(buf) >= self._cap:
            self._former.spill()
            self._buf = self._former.buf

    def end(self):
        self.sorter.runset = self._former.finish()
        self._former = self._buf = None

    def cleanup(self):
        if getattr(self, "_former", None) is not None:
            self._former.runset.discard()
            self._former = None


class _SortOutput(Node):
    def __init__(self, sorter, name):
        super().__init__(name)
        self.sorter = sorter
        self._merged = None

    def prepare(self):
        s = self.sorter
        s.config = stream_config(s.fmt, self.context.block_size)
        self.set_minimum_memory(3 * s.config.block_bytes)
        self.set_maximum_memory(UNBOUNDED)

    def propagate(self):
        runset = self.sorter.runset
        self._remaining = runset.total_items if runset is not None else 0
        self.set_steps(self._remaining)

    def begin(self):
        s = self.sorter
        s.fanout = compute_fanout(self.get_available_memory(), s.config.block_bytes, s.fanout_cap)
        runset = s.runset if s.runset is not None else RunSet([], s.fmt, s.config, s.key)
        s.merge_passes = reduce_runs(runset, s.fanout)
        self._merged = lazy_merge(runset)

    def end(self):
        self.cleanup()

    def cleanup(self):
        if self._merged is not None:
            self._merged.close()
            self._merged = None
        if self.sorter.runset is not None:
            self.sorter.runset.discard()
            self.sorter.runset = None


class _ActiveSortOutput(_SortOutput):
    def go(self):
        push = self.dest.push
        step = self.step
        for item in self._merged:
            step()
            push(item)
        self._remaining = 0


class _PassiveSortOutput(_SortOutput):
    def can_pull(self):
        return self._remaining > 0

    def pull(self):
        if not self._remaining:
            raise ContractViolation(f"pull from {self.name} with nothing left (can_pull is false)")
        self._remaining -= 1
        self.step()
        return next(self._merged)


class _Sorter:
    output_class = None

    def __init__(self, fmt, key=None, fanout_cap=None, name="sort"):
        self.fmt = fmt
        self.key = key
        self.fanout_cap = fanout_cap
        self.config = None
        self.runset = None
        self.capacity = None
        self.fanout = None
        self.merge_passes = None
        self.in_node = _SortInput(self, f"{name}.input")
        self.out_node = self.output_class(self, f"{name}.output")
        link_blocking(self.in_node, self.out_node)

    def input(self):
        return self.in_node

    def output(self):
        return self.out_node


class Sorter(_Sorter, Pipeable):
    """Push in, push out: ``a | Sorter(fmt) | b``."""

    output_class = _ActiveSortOutput

    @property
    def head(self):
        return self.in_node

    @property
    def tail(self):
        return self.out_node


class PassiveSorter(_Sorter):
    """Push into ``input()``; a later phase pulls sorted items from ``output()``."""

    output_class = _PassiveSortOutput


def sort(fmt, key=None, fanout_cap=None, name="sort"):
    return Sorter(fmt, key, fanout_cap, name)


def passive_sorter(fmt, key=None, fanout_cap=None, name="passive_sort"):
    return PassiveSorter(fmt, key, fanout_cap, name)
