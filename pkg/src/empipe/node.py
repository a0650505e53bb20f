"""The component contract and pipe-operator composition.

A component subclasses :class:`Node` and overrides whichever of
``propagate``, ``begin``, ``go``, ``end``, ``push``, ``pull`` and
``can_pull`` it needs.  Components are chained with ``|``::

    p = Generate() | Transform() | sorter.input()
    p.forward("outputsize", (w, h))
    p.run(n)

``a | b`` makes ``b`` a push destination of ``a``.  Pull edges are declared
by the consumer with :meth:`Node.pull_from`, usually in its constructor.
"""
import itertools
from fractions import Fraction

from .errors import (
    ContractViolation,
    LifecycleError,
    MetadataTypeError,
    MissingMetadataError,
)
from .memory import UNBOUNDED, MemoryRequest

REGULAR = "regular"
INPUT_SUB = "input-sub"
OUTPUT_SUB = "output-sub"

_ids = itertools.count()
_INF = float("inf")


def check_metadata_value(value):
    """Metadata values are int, rational (Fraction/float), str or a pair of ints."""
    if isinstance(value, bool):
        raise MetadataTypeError("bool is not a metadata type")
    if isinstance(value, (int, Fraction, float, str)):
        return value
    if (
        isinstance(value, tuple)
        and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        return value
    raise MetadataTypeError(
        f"unsupported metadata value {value!r}; use int, Fraction, float, str or (int, int)"
    )


def _matches(value, kind):
    if kind is None:
        return True
    if kind is int:
        return isinstance(value, int)
    if kind in (Fraction, float):
        return isinstance(value, (Fraction, float))
    if kind is str:
        return isinstance(value, str)
    if kind is tuple:
        return isinstance(value, tuple)
    raise TypeError(f"unknown metadata kind {kind!r}")


class MetadataStore:
    """Key/value pairs forwarded along flow-graph reachability.

    ``reach`` maps each node id to the set of node ids that have a directed
    path to it (itself included).  Values forwarded at the pipeline boundary
    are visible everywhere.  When several visible origins forwarded the same
    key, the most recent forward wins.
    """

    BOUNDARY = None

    def __init__(self, reach=None):
        self.reach = reach or {}
        self._entries = {}  # key -> {origin: (seq, value)}
        self._seq = itertools.count()

    def forward(self, origin, key, value):
        check_metadata_value(value)
        self._entries.setdefault(key, {})[origin] = (next(self._seq), value)

    def fetch(self, at, key, kind=None):
        origins = self._entries.get(key)
        best = None
        if origins:
            visible = self.reach.get(at, ())
            for origin, (seq, value) in origins.items():
                if origin is self.BOUNDARY or origin in visible:
                    if best is None or seq > best[0]:
                        best = (seq, value)
        if best is None:
            raise MissingMetadataError(f"no metadata {key!r} visible at node {at}")
        value = best[1]
        if not _matches(value, kind):
            raise MetadataTypeError(
                f"metadata {key!r} is {type(value).__name__}, requested {kind.__name__}"
            )
        return value

    def has(self, at, key):
        try:
            self.fetch(at, key)
        except MissingMetadataError:
            return False
        return True


class Pipeable:
    """Anything with a first node (``head``) and a last node (``tail``)."""

    def __or__(self, other):
        self.tail.push_to(other.head)
        return Pipeline(self.head, other.tail)


class Pipeline(Pipeable):
    def __init__(self, head, tail=None):
        self.head = head.head
        self.tail = (tail or head).tail
        self._boundary = []

    def nodes(self):
        return collect_nodes([self.head, self.tail])

    def forward(self, key, value):
        """Make ``key`` visible to every node of the pipeline."""
        check_metadata_value(value)
        self._boundary.append((key, value))
        return self

    def plan(self, config=None, tmpdir=None):
        from .executor import plan_pipeline
        return plan_pipeline(self, config=config, tmpdir=tmpdir)

    def run(self, n=0, progress=None, pipeline_id=None, config=None, tmpdir=None, timedb=None):
        from .executor import run_pipeline
        return run_pipeline(
            self, n, progress=progress, pipeline_id=pipeline_id, config=config,
            tmpdir=tmpdir, timedb=timedb,
        )

    __call__ = run


class Node(Pipeable):
    """Base class for all components.

    Subclasses must call ``super().__init__()``.  The framework sets
    ``context`` (block size, temporary directory) before :meth:`prepare`.
    """

    kind = REGULAR

    def __init__(self, name=None):
        self.node_id = next(_ids)
        self.name = name or type(self).__name__
        self.partner = None
        self.dest = None
        self.dests = []
        self.source = None
        self.sources = []
        self._push_in = []
        self._pull_out = []
        self._min_memory = 0
        self._max_memory = 0
        self._priority = 1
        self._grant = None
        self._meta = None
        self._may_forward = False
        self._owner = self
        self.context = None
        self.declared_steps = None
        self.completed_steps = 0
        self._next_report = _INF
        self._tracker = None

    def __repr__(self):
        return f"<{self.name} #{self.node_id}>"

    @property
    def head(self):
        return self

    @property
    def tail(self):
        return self

    # -- wiring ----------------------------------------------------------------

    def push_to(self, node):
        node = node.head
        if node not in self.dests:
            self.dests.append(node)
            node._push_in.append(self)
        if self.dest is None:
            self.dest = node
        return node

    def pull_from(self, node):
        node = node.tail
        if node not in self.sources:
            self.sources.append(node)
            node._pull_out.append(self)
        if self.source is None:
            self.source = node
        return node

    # -- lifecycle (override as needed) ----------------------------------------

    def prepare(self):
        """Called once with ``context`` set, before phases are planned."""

    def propagate(self):
        pass

    def begin(self):
        pass

    def go(self):
        raise ContractViolation(f"{self.name} is a phase initiator but defines no go()")

    def end(self):
        pass

    def push(self, item):
        raise ContractViolation(f"{self.name} does not accept pushed items")

    def pull(self):
        raise ContractViolation(f"{self.name} cannot be pulled from")

    def can_pull(self):
        return False

    def cleanup(self):
        """Called when the run fails, to release files and threads early."""

    # -- metadata --------------------------------------------------------------

    def forward(self, key, value):
        if self._meta is None or not self._owner._may_forward:
            raise LifecycleError(f"{self.name}: forward() is only valid during propagate()")
        self._meta.forward(self._owner.node_id, key, value)

    def fetch(self, key, kind=None):
        if self._meta is None:
            raise LifecycleError(f"{self.name}: fetch() is only valid while the pipeline runs")
        return self._meta.fetch(self._owner.node_id, key, kind)

    def can_fetch(self, key):
        return self._meta is not None and self._meta.has(self._owner.node_id, key)

    # -- progress --------------------------------------------------------------

    def set_steps(self, n):
        if n < 0:
            raise ValueError("step count must be nonnegative")
        self.declared_steps = n

    def step(self, k=1):
        self.completed_steps += k
        if self.completed_steps >= self._next_report:
            self._tracker.report()

    # -- memory ----------------------------------------------------------------

    def set_minimum_memory(self, nbytes):
        self._min_memory = nbytes

    def set_maximum_memory(self, nbytes):
        self._max_memory = nbytes

    def set_memory_priority(self, priority):
        if not priority > 0:
            raise ValueError("memory priority must be positive")
        self._priority = priority

    def memory(self, priority):
        """Chainable form of :meth:`set_memory_priority`."""
        self.set_memory_priority(priority)
        return self

    @property
    def memory_request(self):
        maximum = self._max_memory
        if maximum is not UNBOUNDED and maximum < self._min_memory:
            maximum = self._min_memory
        return MemoryRequest(self._min_memory, maximum, self._priority)

    def get_available_memory(self):
        if self._grant is None:
            raise LifecycleError(
                f"{self.name}: memory has not been assigned yet (call from begin() onwards)"
            )
        return self._grant


def link_blocking(input_node, output_node):
    """Join the two halves of a blocking component with a blocking edge."""
    input_node.kind = INPUT_SUB
    output_node.kind = OUTPUT_SUB
    input_node.partner = output_node
    output_node.partner = input_node


def collect_nodes(roots):
    """Every node connected to ``roots`` by any edge, ordered by node id."""
    seen = {}
    todo = [r.head if isinstance(r, Pipeable) else r for r in roots]
    while todo:
        node = todo.pop()
        if node.node_id in seen:
            continue
        seen[node.node_id] = node
        todo.extend(node.dests)
        todo.extend(node._push_in)
        todo.extend(node.sources)
        todo.extend(node._pull_out)
        if node.partner is not None:
            todo.append(node.partner)
    return [seen[k] for k in sorted(seen)]


# -- lifecycle windows -------------------------------------------------------
# Outside the begin()/end() window of its phase a node's push/pull are
# shadowed by instance attributes that raise; removing them restores the
# class methods, so the hot path pays nothing for the check.

def close_window(node):
    def push(item, _node=node):
        raise ContractViolation(f"push to {_node.name} outside its begin()/end() window")

    def pull(_node=node):
        raise ContractViolation(f"pull from {_node.name} outside its begin()/end() window")

    node.__dict__["push"] = push
    node.__dict__["pull"] = pull


def open_window(node):
    node.__dict__.pop("push", None)
    node.__dict__.pop("pull", None)
