"""Delay and reverse: blocking components that park a stream on disk.

A delay replays its input in the same order during a later phase; a
reverse replays it backwards.  Active variants push their output, passive
variants are pulled from.
"""
import os

from ..errors import ContractViolation
from ..node import Node, Pipeable, link_blocking
from ..stream_io import open_stream
from .sorting import stream_config


class _BufferInput(Node):
    def __init__(self, owner, name):
        super().__init__(name)
        self.owner = owner
        self._stream = None

    def prepare(self):
        o = self.owner
        o.config = stream_config(o.fmt, self.context.block_size)
        self.set_minimum_memory(o.config.block_bytes)
        self.set_maximum_memory(o.config.block_bytes)

    def begin(self):
        o = self.owner
        o.path = self.context.temp_path(f"{o.kind_name}-")
        self._stream = open_stream(o.path, "write", o.config, o.fmt)
        self._write = self._stream.write_item

    def push(self, item):
        self._write(item)

    def end(self):
        self.owner.length = self._stream.length_items
        self._stream.close()
        self._stream = self._write = None

    def cleanup(self):
        if self._stream is not None:
            self._stream.close()
            self._stream = None
        self.owner.discard()


class _BufferOutput(Node):
    def __init__(self, owner, name):
        super().__init__(name)
        self.owner = owner
        self._stream = None

    def prepare(self):
        o = self.owner
        o.config = stream_config(o.fmt, self.context.block_size)
        self.set_minimum_memory(o.config.block_bytes)
        self.set_maximum_memory(o.config.block_bytes)

    def propagate(self):
        self.set_steps(self.owner.length)

    def begin(self):
        o = self.owner
        if o.path is None:
            self._stream = None
            self._read = None
            return
        self._stream = open_stream(o.path, "read", o.config, o.fmt)
        self._read = self._stream.read_item_back if o.reverse else self._stream.read_item
        self._more = self._stream.can_read_back if o.reverse else self._stream.can_read

    def end(self):
        self.cleanup()

    def cleanup(self):
        if self._stream is not None:
            self._stream.close()
            self._stream = None
        self.owner.discard()


class _ActiveBufferOutput(_BufferOutput):
    def go(self):
        if self._stream is None:
            return
        push = self.dest.push
        read = self._read
        step = self.step
        for _ in range(self.owner.length):
            step()
            push(read())


class _PassiveBufferOutput(_BufferOutput):
    def can_pull(self):
        return self._stream is not None and self._more()

    def pull(self):
        if not self.can_pull():
            raise ContractViolation(f"pull from {self.name} with nothing left (can_pull is false)")
        self.step()
        return self._read()


class _Buffer:
    def __init__(self, fmt, reverse, passive, name):
        self.fmt = fmt
        self.reverse = reverse
        self.kind_name = "reverse" if reverse else "delay"
        self.config = None
        self.path = None
        self.length = 0
        out_cls = _PassiveBufferOutput if passive else _ActiveBufferOutput
        self.in_node = _BufferInput(self, f"{name}.input")
        self.out_node = out_cls(self, f"{name}.output")
        link_blocking(self.in_node, self.out_node)

    def input(self):
        return self.in_node

    def output(self):
        return self.out_node

    def discard(self):
        if self.path is not None and os.path.exists(self.path):
            os.unlink(self.path)
        self.path = None


class ActiveBuffer(_Buffer, Pipeable):
    @property
    def head(self):
        return self.in_node

    @property
    def tail(self):
        return self.out_node


def delay(fmt, name="delay"):
    return ActiveBuffer(fmt, reverse=False, passive=False, name=name)


def passive_delay(fmt, name="passive_delay"):
    return _Buffer(fmt, reverse=False, passive=True, name=name)


def reverse(fmt, name="reverse"):
    return ActiveBuffer(fmt, reverse=True, passive=False, name=name)


def passive_reverse(fmt, name="passive_reverse"):
    return _Buffer(fmt, reverse=True, passive=True, name=name)
