"""Rasters stored as streams of int32 cells in row-major order, and transforms."""
import math
import random
from dataclasses import dataclass

from ..errors import EmpipeError
from ..nodes.sorting import stream_config
from ..stream_io import open_stream

CELL_FMT = "<i"
S1_FMT = "<IIII"  # source y, source x, target y, target x
S2_FMT = "<IIi"   # target y, target x, value

TRANSFORMS = ("identity", "transpose", "rot90", "block-shuffle")


class TransformDomainError(EmpipeError, ValueError):
    """The transform mapped an output cell outside the input raster."""

    def __init__(self, cell, source, input_dims):
        self.cell = cell
        self.source = source
        super().__init__(
            f"transform maps output cell {cell} to {source}, outside the "
            f"{input_dims[0]}x{input_dims[1]} input raster"
        )


@dataclass(frozen=True)
class Raster:
    width: int
    height: int
    path: str

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("raster dimensions must be positive")

    @property
    def dimensions(self):
        return (self.width, self.height)

    @property
    def cell_count(self):
        return self.width * self.height


def write_raster(path, width, height, cells, block_size=4096):
    """Write ``cells`` (row-major) to ``path``; returns the :class:`Raster`."""
    config = stream_config(CELL_FMT, block_size)
    with open_stream(path, "write", config, CELL_FMT) as out:
        out.write_items(cells)
        if out.length_items != width * height:
            raise ValueError(f"{out.length_items} cells for a {width}x{height} raster")
    return Raster(width, height, path)


def read_cells(raster, block_size=4096):
    config = stream_config(CELL_FMT, block_size)
    with open_stream(raster.path, "read", config, CELL_FMT) as s:
        return list(s)


def random_cells(n, seed):
    rng = random.Random(seed)
    bits = rng.getrandbits
    return [bits(32) - (1 << 31) for _ in range(n)]


def _tile_size(width, height):
    g = math.gcd(width, height)
    return max(d for d in range(1, min(g, 32) + 1) if g % d == 0)


class TransformFn:
    """Maps an output cell (x, y) to the input cell it copies from."""

    def __init__(self, name, width, height, seed=0):
        if name not in TRANSFORMS:
            raise ValueError(f"unknown transform {name!r}; choose from {', '.join(TRANSFORMS)}")
        self.name = name
        self.width = width
        self.height = height
        self.seed = seed
        if name == "block-shuffle":
            t = self.tile = _tile_size(width, height)
            self.tiles_x = width // t
            tiles = self.tiles_x * (height // t)
            self.perm = list(range(tiles))
            random.Random(seed).shuffle(self.perm)

    @property
    def output_dims(self):
        if self.name in ("transpose", "rot90"):
            return (self.height, self.width)
        return (self.width, self.height)

    def __call__(self, x, y):
        name = self.name
        if name == "identity":
            return x, y
        if name == "transpose":
            return y, x
        if name == "rot90":
            return y, self.height - 1 - x
        t = self.tile
        tx, ox = divmod(x, t)
        ty, oy = divmod(y, t)
        src = self.perm[ty * self.tiles_x + tx]
        sy, sx = divmod(src, self.tiles_x)
        return sx * t + ox, sy * t + oy

    def __repr__(self):
        return f"TransformFn({self.name!r}, {self.width}, {self.height}, seed={self.seed})"


def transform_in_memory(cells, width, height, f, out_dims):
    """Direct evaluation B[x, y] = A[f(x, y)]; the correctness reference."""
    w2, h2 = out_dims
    out = []
    for y in range(h2):
        for x in range(w2):
            sx, sy = f(x, y)
            if not (0 <= sx < width and 0 <= sy < height):
                raise TransformDomainError((x, y), (sx, sy), (width, height))
            out.append(cells[sy * width + sx])
    return out
