"""Run a stateless push component on several worker threads.

Incoming items are grouped into batches (2048 by default) and batches are
handed to the worker copies round-robin.  Results are re-emitted in dispatch
order, so the output order equals the input order.
"""
import copy
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..node import Node

DEFAULT_BATCH_SIZE = 2048


@dataclass(frozen=True)
class ParallelConfig:
    worker_count: int = None
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.worker_count is not None and self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def workers(self):
        return self.worker_count or os.cpu_count() or 1


class _Collector:
    __slots__ = ("out",)

    def __init__(self):
        self.out = []

    def push(self, item):
        self.out.append(item)


def _chain(head, tail):
    nodes = [head]
    while nodes[-1] is not tail:
        nxt = nodes[-1].dest
        if nxt is None:
            raise ValueError("parallel() needs a linear push chain")
        nodes.append(nxt)
    return nodes


def _run_batch(head, collector, batch):
    collector.out = []
    push = head.push
    for item in batch:
        push(item)
    out = collector.out
    collector.out = []
    return out


def _lifecycle(nodes, method, collector):
    collector.out = []
    for node in nodes if method == "begin" else reversed(nodes):
        getattr(node, method)()
    out = collector.out
    collector.out = []
    return out


class Parallel(Node):
    """Wraps an unconnected push component (or chain) in a worker pool."""

    def __init__(self, inner, config=None, name=None):
        inner_name = inner.head.name if inner.head is inner.tail else f"{inner.head.name}..."
        super().__init__(name or f"parallel({inner_name})")
        if inner.tail.dests:
            raise ValueError("the wrapped component must not already have a destination")
        self.inner = inner
        self.config = config or ParallelConfig()
        self.nodes = _chain(inner.head, inner.tail)
        self.worker_batches = []
        self._pools = []

    def prepare(self):
        for node in self.nodes:
            node.context = self.context
            node.prepare()

    def propagate(self):
        for node in self.nodes:
            node._meta = self._meta
            node._owner = self
            node.propagate()

    def begin(self):
        workers = self.config.workers
        self.batch_size = self.config.batch_size
        memo = {id(self): self, id(self._meta): self._meta, id(self.context): self.context}
        self._copies = []
        self._pools = []
        self.worker_batches = [0] * workers
        for i in range(workers):
            nodes = copy.deepcopy(self.nodes, dict(memo))
            collector = _Collector()
            nodes[-1].dest = collector
            pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix=f"{self.name}-{i}")
            self._pools.append(pool)
            self._copies.append((nodes, collector))
            # copies live on their worker thread from begin() onwards
            leftovers = pool.submit(_lifecycle, nodes, "begin", collector).result()
            self._emit_list(leftovers)
        self._batch = []
        self._pending = deque()
        self._next = 0

    def push(self, item):
        batch = self._batch
        batch.append(item)
        if len(batch) >= self.batch_size:
            self._dispatch()

    def _dispatch(self):
        batch, self._batch = self._batch, []
        w = self._next
        self._next = (w + 1) % len(self._pools)
        nodes, collector = self._copies[w]
        self.worker_batches[w] += 1
        self._pending.append(self._pools[w].submit(_run_batch, nodes[0], collector, batch))
        if len(self._pending) > 2 * len(self._pools):
            self._emit_list(self._pending.popleft().result())

    def _emit_list(self, items):
        push = self.dest.push
        for item in items:
            push(item)

    def end(self):
        if self._batch:
            self._dispatch()
        while self._pending:
            self._emit_list(self._pending.popleft().result())
        for (nodes, collector), pool in zip(self._copies, self._pools):
            self._emit_list(pool.submit(_lifecycle, nodes, "end", collector).result())
        self._shutdown()

    def cleanup(self):
        self._shutdown()

    def _shutdown(self):
        for pool in self._pools:
            pool.shutdown(wait=True, cancel_futures=True)
        self._pools = []
        self._copies = []


def parallel(inner, worker_count=None, batch_size=DEFAULT_BATCH_SIZE):
    return Parallel(inner, ParallelConfig(worker_count, batch_size))
