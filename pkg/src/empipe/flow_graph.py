"""Flow-graph validation, phase identification and execution orders.

Nodes are identified by integer ids; push and pull edges run along the
streaming direction, and each blocking edge joins the input half of a
blocking component to its output half.  Removing the blocking edges splits
the graph into connected components, which are the phases.
"""
import heapq
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .errors import (
    BlockingComponentConflict,
    GraphValidationError,
    InitiatorError,
    PhaseCycleError,
)
from .memory import UNBOUNDED, MemoryRequest, assign_memory
from .node import INPUT_SUB, OUTPUT_SUB, REGULAR


@dataclass(frozen=True)
class NodeDescriptor:
    node_id: int
    name: str = ""
    kind: str = REGULAR
    partner: int = None
    memory_request: MemoryRequest = MemoryRequest()
    declared_steps: int = None


@dataclass
class FlowGraph:
    nodes: list
    push_edges: set = field(default_factory=set)
    pull_edges: set = field(default_factory=set)
    blocking_edges: set = field(default_factory=set)

    def __post_init__(self):
        self._by_id = {d.node_id: d for d in self.nodes}

    @classmethod
    def from_nodes(cls, nodes):
        """Describe live :class:`~empipe.node.Node` objects."""
        descs, push, pull, blocking = [], set(), set(), set()
        for node in nodes:
            partner = node.partner.node_id if node.partner is not None else None
            descs.append(NodeDescriptor(
                node.node_id, node.name, node.kind, partner, node.memory_request,
                node.declared_steps,
            ))
            for d in node.dests:
                push.add((node.node_id, d.node_id))
            for s in node.sources:
                pull.add((s.node_id, node.node_id))
            if node.kind == INPUT_SUB and node.partner is not None:
                blocking.add((node.node_id, partner))
        return cls(sorted(descs, key=lambda d: d.node_id), push, pull, blocking)

    def node(self, node_id):
        return self._by_id[node_id]

    def name(self, node_id):
        d = self._by_id.get(node_id)
        return f"{d.name}#{node_id}" if d is not None else f"#{node_id}"

    @property
    def node_ids(self):
        return [d.node_id for d in self.nodes]


@dataclass
class Phase:
    index: int
    node_ids: tuple
    initiator: int
    propagate_order: list
    begin_order: list
    end_order: list
    memory: object = None  # MemoryAssignment, when planned against a budget


@dataclass
class PhasePlan:
    phases: list

    def __len__(self):
        return len(self.phases)

    def phase_of(self, node_id):
        for phase in self.phases:
            if node_id in phase.node_ids:
                return phase
        raise KeyError(node_id)


# -- helpers ---------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _stream_edges(graph):
    return graph.push_edges | graph.pull_edges


def _toposort(nodes, edges, key=None):
    """Kahn's algorithm; ties go to the smallest ``key`` (default: the node)."""
    key = key or (lambda x: x)
    nodes = list(nodes)
    succ = defaultdict(list)
    indeg = {n: 0 for n in nodes}
    for u, v in edges:
        if u in indeg and v in indeg:
            succ[u].append(v)
            indeg[v] += 1
    ready = [(key(n), n) for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, (key(m), m))
    if len(order) != len(nodes):
        return None
    return order


def _find_cycle(nodes, edges):
    succ = defaultdict(list)
    for u, v in edges:
        succ[u].append(v)
    color = {n: 0 for n in nodes}
    stack_path = []

    def visit(n):
        color[n] = 1
        stack_path.append(n)
        for m in sorted(succ[n]):
            if color.get(m) == 1:
                return stack_path[stack_path.index(m):] + [m]
            if color.get(m) == 0:
                found = visit(m)
                if found:
                    return found
        stack_path.pop()
        color[n] = 2
        return None

    for n in sorted(nodes):
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def _undirected_path(graph, src, dst):
    adj = defaultdict(list)
    for u, v in _stream_edges(graph):
        adj[u].append(v)
        adj[v].append(u)
    prev = {src: None}
    todo = deque([src])
    while todo:
        n = todo.popleft()
        if n == dst:
            break
        for m in sorted(adj[n]):
            if m not in prev:
                prev[m] = n
                todo.append(m)
    path = []
    n = dst
    while n is not None:
        path.append(n)
        n = prev.get(n)
    return path[::-1]


def initiators(graph, node_ids):
    """Nodes with no incoming push edge and no outgoing pull edge."""
    pushed = {v for _, v in graph.push_edges}
    pulled_from = {u for u, _ in graph.pull_edges}
    return [n for n in sorted(node_ids) if n not in pushed and n not in pulled_from]


# -- public analysis ---------------------------------------------------------------

def identify_phases(graph):
    """Connected components after dropping blocking edges, by smallest node id."""
    uf = _UnionFind(graph.node_ids)
    for u, v in _stream_edges(graph):
        uf.union(u, v)
    groups = defaultdict(list)
    for n in graph.node_ids:
        groups[uf.find(n)].append(n)
    return sorted((tuple(sorted(g)) for g in groups.values()), key=lambda g: g[0])


def _phase_edges(graph, phases):
    where = {n: i for i, ph in enumerate(phases) for n in ph}
    edges = set()
    for u, v in graph.blocking_edges:
        if where[u] != where[v]:
            edges.add((where[u], where[v]))
    return edges


def validate(graph):
    """Raise a :class:`GraphValidationError` subclass if the graph cannot run."""
    ids = set(graph.node_ids)
    for kind, edges in (("push", graph.push_edges), ("pull", graph.pull_edges),
                        ("blocking", graph.blocking_edges)):
        for u, v in edges:
            if u not in ids or v not in ids:
                raise GraphValidationError(f"{kind} edge ({u}, {v}) references an unknown node")
            if u == v:
                raise GraphValidationError(f"{kind} edge on {graph.name(u)} is a self loop")

    push_out = {u for u, _ in graph.push_edges}
    for u, _ in graph.pull_edges:
        if u in push_out:
            raise GraphValidationError(
                f"{graph.name(u)} has both an outgoing push and an outgoing pull edge"
            )

    for u, v in graph.blocking_edges:
        du, dv = graph.node(u), graph.node(v)
        if du.kind != INPUT_SUB or dv.kind != OUTPUT_SUB or du.partner != v or dv.partner != u:
            raise GraphValidationError(
                f"blocking edge ({graph.name(u)}, {graph.name(v)}) does not join the input "
                f"and output halves of one blocking component"
            )
    for d in graph.nodes:
        if d.kind == INPUT_SUB and (d.node_id, d.partner) not in graph.blocking_edges:
            raise GraphValidationError(f"{graph.name(d.node_id)} has no blocking edge")

    # every input/output pair must land in different phases
    phases = identify_phases(graph)
    where = {n: i for i, ph in enumerate(phases) for n in ph}
    for u, v in sorted(graph.blocking_edges):
        if where[u] == where[v]:
            path = " - ".join(graph.name(n) for n in _undirected_path(graph, u, v))
            raise BlockingComponentConflict(
                f"both halves of blocking component {graph.name(u)} -> {graph.name(v)} "
                f"are in one phase via {path}; insert a delay component to split it"
            )

    # phases, contracted along push/pull edges, must form a DAG
    pedges = _phase_edges(graph, phases)
    cycle = _find_cycle(range(len(phases)), pedges)
    if cycle:
        desc = " -> ".join("{" + ", ".join(graph.name(n) for n in phases[i]) + "}" for i in cycle)
        raise PhaseCycleError(f"phases depend on each other cyclically: {desc}")

    for ph in phases:
        cycle = _find_cycle(ph, [e for e in _stream_edges(graph) if e[0] in ph])
        if cycle:
            raise PhaseCycleError(
                "stream edges form a cycle: " + " -> ".join(graph.name(n) for n in cycle)
            )
        inits = initiators(graph, ph)
        if len(inits) != 1:
            names = ", ".join(graph.name(n) for n in ph)
            raise InitiatorError(
                f"phase {{{names}}} has {len(inits)} initiators "
                f"({', '.join(graph.name(n) for n in inits) or 'none'}); exactly one is required"
            )


def phase_order(graph, phases):
    """Topological order of the contracted phase graph, ties by smallest node id."""
    phases = list(phases)
    pedges = _phase_edges(graph, phases)
    order = _toposort(range(len(phases)), pedges, key=lambda i: phases[i][0])
    if order is None:
        raise PhaseCycleError("phase graph is cyclic")
    return [phases[i] for i in order]


def node_orders(graph, phase_nodes):
    """(propagate_order, begin_order, end_order) for the nodes of one phase."""
    members = set(phase_nodes)
    push = [(u, v) for u, v in graph.push_edges if u in members and v in members]
    pull = [(u, v) for u, v in graph.pull_edges if u in members and v in members]
    prop = _toposort(members, push + pull)
    begin = _toposort(members, [(v, u) for u, v in push] + pull)
    if prop is None or begin is None:
        raise PhaseCycleError("stream edges within a phase form a cycle")
    return prop, begin, begin[::-1]


def plan(graph, available=None):
    """Validate ``graph`` and build its :class:`PhasePlan`.

    With ``available`` set, each phase also carries the memory assignment its
    nodes would get from that many bytes.
    """
    validate(graph)
    ordered = phase_order(graph, identify_phases(graph))
    phases = []
    for index, members in enumerate(ordered):
        prop, begin, end = node_orders(graph, members)
        (initiator,) = initiators(graph, members)
        assignment = None
        if available is not None:
            assignment = assign_memory(
                {n: graph.node(n).memory_request for n in members}, available
            )
        phases.append(Phase(index, members, initiator, prop, begin, end, assignment))
    return PhasePlan(phases)


def format_plan(plan, graph):
    """Human-readable, deterministic description of a plan."""
    lines = [f"phases: {len(plan.phases)}"]
    for ph in plan.phases:
        lines.append(f"phase {ph.index}: initiator {graph.name(ph.initiator)}")
        lines.append("  propagate: " + ", ".join(graph.name(n) for n in ph.propagate_order))
        lines.append("  begin:     " + ", ".join(graph.name(n) for n in ph.begin_order))
        lines.append("  end:       " + ", ".join(graph.name(n) for n in ph.end_order))
        if ph.memory is not None:
            lines.append(f"  memory: lambda={float(ph.memory.lam):.6g} total={ph.memory.total}")
            for n in ph.node_ids:
                req = graph.node(n).memory_request
                hi = "inf" if req.maximum_bytes is UNBOUNDED else req.maximum_bytes
                lines.append(
                    f"    {graph.name(n)}: [{req.minimum_bytes}, {hi}] x{req.priority}"
                    f" -> {ph.memory.grants[n]}"
                )
    return "\n".join(lines) + "\n"
