"""The raster transformation, materialized (five steps) and pipelined (three phases).

Both modes build the same two intermediate streams: S1 holds one item
(source cell, target cell) per output cell and is sorted by source; S2 holds
(target cell, value) and is sorted by target.  Items are tuples whose natural
order is the required row-major order.
"""
import os
import tempfile

from ..errors import ContractViolation
from ..executor import plan_pipeline, run_pipeline
from ..node import Node
from ..nodes.parallel import parallel
from ..nodes.sorting import compute_fanout, external_sort, passive_sorter, sort, stream_config
from ..stream_io import BlockConfig, open_stream
from .raster import CELL_FMT, S1_FMT, S2_FMT, Raster, TransformDomainError

PIPELINE_ID = "raster-transform"


class GenerateOutputPoints(Node):
    def __init__(self):
        super().__init__("generate_output_points")

    def propagate(self):
        self.dims = self.fetch("outputsize", tuple)
        self.set_steps(self.dims[0] * self.dims[1])

    def go(self):
        width, height = self.dims
        push = self.dest.push
        step = self.step
        for y in range(height):
            for x in range(width):
                step()
                push((x, y))


class ComputeTransformation(Node):
    def __init__(self, f):
        super().__init__("compute_transformation")
        self.f = f

    def propagate(self):
        self.dims = self.fetch("inputsize", tuple)

    def push(self, cell):
        x, y = cell
        sx, sy = self.f(x, y)
        width, height = self.dims
        if not (0 <= sx < width and 0 <= sy < height):
            raise TransformDomainError(cell, (sx, sy), self.dims)
        self.dest.push((sy, sx, y, x))


class ReadRaster(Node):
    """Initiator pushing the cell values of a raster in row-major order."""

    def __init__(self, raster):
        super().__init__("read_raster")
        self.raster = raster
        self._stream = None

    def prepare(self):
        self.config = stream_config(CELL_FMT, self.context.block_size)
        self.set_minimum_memory(self.config.block_bytes)
        self.set_maximum_memory(self.config.block_bytes)

    def propagate(self):
        self.set_steps(self.raster.cell_count)

    def begin(self):
        self._stream = open_stream(self.raster.path, "read", self.config, CELL_FMT)
        if self._stream.length_items != self.raster.cell_count:
            raise ValueError(
                f"{self.raster.path}: {self._stream.length_items} cells, expected "
                f"{self.raster.width}x{self.raster.height}"
            )

    def go(self):
        push = self.dest.push
        step = self.step
        for v in self._stream:
            step()
            push(v)

    def end(self):
        self.cleanup()

    def cleanup(self):
        if self._stream is not None:
            self._stream.close()
            self._stream = None


class ConstructS2(Node):
    """Merges the input cells with S1 sorted by source cell.

    Input values are pushed in row-major order; S1 items are pulled while
    their source cell is the current one.
    """

    def __init__(self, sorted_s1):
        super().__init__("construct_S2")
        self.pull_from(sorted_s1)

    def propagate(self):
        self.width = self.fetch("inputsize", tuple)[0]

    def begin(self):
        self._index = 0
        self._pending = None

    def push(self, v):
        src = self.source
        width = self.width
        y, x = divmod(self._index, self.width)
        self._index += 1
        item = self._pending
        if item is None:
            if not src.can_pull():
                return
            item = src.pull()
        while item[0] == y and item[1] == x:
            self.dest.push((item[2], item[3], v))
            if not src.can_pull():
                item = None
                break
            item = src.pull()
        if item is not None and item[0] * width + item[1] < self._index:
            raise ContractViolation(f"S1 is not sorted by source cell at {item}")
        self._pending = item

    def end(self):
        if self._pending is not None or self.source.can_pull():
            raise ContractViolation("S1 refers to cells beyond the end of the input raster")


class ConstructOutput(Node):
    """Checks that S2 arrives in output row-major order and pushes the values."""

    def __init__(self):
        super().__init__("construct_output")

    def propagate(self):
        self.width = self.fetch("outputsize", tuple)[0]

    def begin(self):
        self._expected = 0

    def push(self, item):
        y, x, v = item
        if y * self.width + x != self._expected:
            raise ContractViolation(
                f"output cell ({x}, {y}) arrived out of order, expected index {self._expected}"
            )
        self._expected += 1
        self.dest.push(v)


class WriteRaster(Node):
    def __init__(self, raster):
        super().__init__("write_raster")
        self.raster = raster
        self._stream = None

    def prepare(self):
        self.config = stream_config(CELL_FMT, self.context.block_size)
        self.set_minimum_memory(self.config.block_bytes)
        self.set_maximum_memory(self.config.block_bytes)

    def begin(self):
        self._stream = open_stream(self.raster.path, "write", self.config, CELL_FMT)
        self.push = self._stream.write_item

    def end(self):
        n = self._stream.length_items
        self.cleanup()
        if n != self.raster.cell_count:
            raise ContractViolation(f"wrote {n} cells, expected {self.raster.cell_count}")

    def cleanup(self):
        self.__dict__.pop("push", None)
        if self._stream is not None:
            self._stream.close()
            self._stream = None


def build_pipeline(a, b, f, workers=None):
    """Wire the eight components; returns the pipeline to execute."""
    sort_s1 = passive_sorter(S1_FMT, name="sort_S1")
    sort_s2 = sort(S2_FMT, name="sort_S2")
    p1 = GenerateOutputPoints() | parallel(ComputeTransformation(f), workers) | sort_s1.input()
    p2 = (ReadRaster(a) | ConstructS2(sort_s1.output()) | sort_s2
          | ConstructOutput() | WriteRaster(b))
    p1.forward("inputsize", a.dimensions)
    p1.forward("outputsize", b.dimensions)
    return p1, p2, sort_s1, sort_s2


def plan_pipelined(a, b, f, config):
    p1, *_ = build_pipeline(a, b, f)
    return plan_pipeline(p1, config=config)


def run_pipelined(a, out_path, f, config=None, tmpdir=None, progress=None, timedb=None,
                  workers=None):
    """Three phases; returns the output :class:`Raster` and the run record."""
    config = config or BlockConfig()
    w2, h2 = f.output_dims
    b = Raster(w2, h2, out_path)
    p1, _, sort_s1, sort_s2 = build_pipeline(a, b, f, workers)
    n = a.cell_count + b.cell_count
    run = p1.run(n, progress=progress, pipeline_id=PIPELINE_ID if timedb else None,
                 config=config, tmpdir=tmpdir, timedb=timedb)
    run.sorters = {"sort_S1": sort_s1, "sort_S2": sort_s2}
    return b, run


# -- five-step baseline ------------------------------------------------------------

def _sort_file(src_path, dst_path, fmt, config, memory_bytes, tmpdir):
    sc = stream_config(fmt, config.block_size_items)
    # the source stream keeps one block; the rest is the sorter's, as in a pipeline
    grant = memory_bytes - sc.block_bytes
    capacity = max(1, (grant - sc.block_bytes) // sc.item_size_bytes)
    fanout = compute_fanout(grant, sc.block_bytes)
    with open_stream(src_path, "read", sc, fmt) as src:
        external_sort(src, dst_path, fmt, sc, capacity, fanout, tmpdir=tmpdir)
    os.unlink(src_path)


def run_materialized(a, out_path, f, config=None, tmpdir=None):
    """Five separate steps, every intermediate stream written to disk."""
    config = config or BlockConfig()
    memory_bytes = config.memory_limit_bytes
    bs = config.block_size_items
    s1c, s2c, cc = (stream_config(fmt, bs) for fmt in (S1_FMT, S2_FMT, CELL_FMT))
    width, height = a.dimensions
    w2, h2 = f.output_dims
    b = Raster(w2, h2, out_path)

    def tmp(prefix):
        fd, path = tempfile.mkstemp(prefix=prefix, suffix=".ems", dir=tmpdir)
        os.close(fd)
        return path

    s1, s1_sorted, s2, s2_sorted = tmp("S1-"), tmp("S1s-"), tmp("S2-"), tmp("S2s-")
    try:
        # 1: generate S1
        with open_stream(s1, "write", s1c, S1_FMT) as out:
            write = out.write_item
            for y in range(h2):
                for x in range(w2):
                    sx, sy = f(x, y)
                    if not (0 <= sx < width and 0 <= sy < height):
                        raise TransformDomainError((x, y), (sx, sy), a.dimensions)
                    write((sy, sx, y, x))
        # 2: sort S1 by source cell
        _sort_file(s1, s1_sorted, S1_FMT, config, memory_bytes, tmpdir)
        # 3: scan A and sorted S1 together
        with open_stream(a.path, "read", cc, CELL_FMT) as cells, \
                open_stream(s1_sorted, "read", s1c, S1_FMT) as items, \
                open_stream(s2, "write", s2c, S2_FMT) as out:
            write = out.write_item
            cell_iter = iter(cells)
            index, v = -1, None
            for sy, sx, y, x in items:
                want = sy * width + sx
                while index < want:
                    v = next(cell_iter)
                    index += 1
                write((y, x, v))
        os.unlink(s1_sorted)
        # 4: sort S2 by target cell
        _sort_file(s2, s2_sorted, S2_FMT, config, memory_bytes, tmpdir)
        # 5: scan sorted S2 and write B
        with open_stream(s2_sorted, "read", s2c, S2_FMT) as items, \
                open_stream(out_path, "write", cc, CELL_FMT) as out:
            write = out.write_item
            for _, _, v in items:
                write(v)
    finally:
        for path in (s1, s1_sorted, s2, s2_sorted):
            if os.path.exists(path):
                os.unlink(path)
    return b
