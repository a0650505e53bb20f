"""Sources, sinks and per-item plumbing."""
from ..errors import ContractViolation
from ..node import Node
from ..stream_io import open_stream
from .sorting import stream_config


class StreamSource(Node):
    """Initiator pushing every item of a stream file."""

    def __init__(self, path, fmt, name=None):
        super().__init__(name or "stream_source")
        self.path = path
        self.fmt = fmt
        self._stream = None

    def prepare(self):
        self.config = stream_config(self.fmt, self.context.block_size)
        self.set_minimum_memory(self.config.block_bytes)
        self.set_maximum_memory(self.config.block_bytes)

    def propagate(self):
        self._stream = open_stream(self.path, "read", self.config, self.fmt)
        self.set_steps(self._stream.length_items)

    def go(self):
        push = self.dest.push
        step = self.step
        for item in self._stream:
            step()
            push(item)

    def end(self):
        self.cleanup()

    def cleanup(self):
        if self._stream is not None:
            self._stream.close()
            self._stream = None


class StreamSink(Node):
    """Writes every pushed item to a new stream file."""

    def __init__(self, path, fmt, name=None):
        super().__init__(name or "stream_sink")
        self.path = path
        self.fmt = fmt
        self.length = 0
        self._stream = None

    def prepare(self):
        self.config = stream_config(self.fmt, self.context.block_size)
        self.set_minimum_memory(self.config.block_bytes)
        self.set_maximum_memory(self.config.block_bytes)

    def begin(self):
        self._stream = open_stream(self.path, "write", self.config, self.fmt)
        self.push = self._stream.write_item

    def end(self):
        self.length = self._stream.length_items
        self.cleanup()

    def cleanup(self):
        self.__dict__.pop("push", None)
        if self._stream is not None:
            self._stream.close()
            self._stream = None


class Map(Node):
    def __init__(self, fn, name=None):
        super().__init__(name or f"map({getattr(fn, '__name__', 'fn')})")
        self.fn = fn

    def push(self, item):
        self.dest.push(self.fn(item))


class Filter(Node):
    def __init__(self, pred, name=None):
        super().__init__(name or f"filter({getattr(pred, '__name__', 'pred')})")
        self.pred = pred

    def push(self, item):
        if self.pred(item):
            self.dest.push(item)


class IterableSource(Node):
    """Initiator pushing the items of an in-memory iterable."""

    def __init__(self, items, name=None):
        super().__init__(name or "iterable_source")
        self.items = items

    def propagate(self):
        if hasattr(self.items, "__len__"):
            self.set_steps(len(self.items))

    def go(self):
        push = self.dest.push
        step = self.step
        for item in self.items:
            step()
            push(item)


class Collect(Node):
    """Appends every pushed item to ``out`` (a list by default)."""

    def __init__(self, out=None, name=None):
        super().__init__(name or "collect")
        self.out = [] if out is None else out

    def push(self, item):
        self.out.append(item)


class IterablePullSource(Node):
    """Pull source over an in-memory sequence."""

    def __init__(self, items, name=None):
        super().__init__(name or "iterable_pull_source")
        self.items = list(items)
        self._pos = 0

    def begin(self):
        self._pos = 0

    def can_pull(self):
        return self._pos < len(self.items)

    def pull(self):
        if self._pos >= len(self.items):
            raise ContractViolation(f"pull from {self.name} with nothing left (can_pull is false)")
        self._pos += 1
        return self.items[self._pos - 1]


class PullCollect(Node):
    """Initiator that drains its pull source into ``out``."""

    def __init__(self, source, out=None, name=None):
        super().__init__(name or "pull_collect")
        self.out = [] if out is None else out
        self.pull_from(source)

    def go(self):
        src = self.source
        while src.can_pull():
            self.out.append(src.pull())


def stream_source(path, fmt):
    return StreamSource(path, fmt)


def stream_sink(path, fmt):
    return StreamSink(path, fmt)


def map_items(fn):
    return Map(fn)


def filter_items(pred):
    return Filter(pred)
