"""Independent reference computations used by the tests.

None of these share code with the package: the memory oracle sweeps a grid
of lambda values, phases come from a plain BFS, and execution traces are
checked edge by edge.
"""
import random
from collections import defaultdict

INF = float("inf")


# -- memory -----------------------------------------------------------------------

def grant_at(req, lam):
    """req = (a, b, c) with b possibly INF."""
    a, b, c = req
    return max(a, min(b, lam * c))


def total_at(reqs, lam):
    return sum(grant_at(r, lam) for r in reqs)


def lambda_sweep(reqs, available, points=200, resolution=1e-9):
    """Largest feasible lambda on successively finer grids.

    Each level scans ``points`` evenly spaced values between the last
    feasible grid point and the next one, so the grid step shrinks by a
    factor of ``points`` per level.  Returns (lam, grants) where grants are
    floored; saturated instances return the maxima.
    """
    if sum(r[0] for r in reqs) > available:
        return None
    top = 0.0
    for a, b, c in reqs:
        top = max(top, (b if b != INF else available) / c + 1.0)
    if total_at(reqs, top) <= available and all(b != INF for _, b, _ in reqs):
        return top, [int(b) for _, b, _ in reqs]
    lo, step = 0.0, top / points
    while step > resolution:
        k = 0
        while k < points and total_at(reqs, lo + (k + 1) * step) <= available:
            k += 1
        lo += k * step
        step /= points
    return lo, [int(grant_at(r, lo)) for r in reqs]


def random_requests(rng, max_nodes=20, max_priority=8):
    n = rng.randint(1, max_nodes)
    reqs = []
    for _ in range(n):
        a = rng.randint(0, 200)
        if rng.random() < 0.3:
            b = INF
        else:
            b = a + rng.randint(0, 400)
        c = rng.randint(1, max_priority)
        reqs.append((a, b, c))
    need = sum(r[0] for r in reqs)
    available = need + rng.randint(0, 3000)
    return reqs, available


# -- flow graphs --------------------------------------------------------------------

def components(node_ids, edges):
    """Connected components (undirected) by BFS, as frozensets."""
    adj = defaultdict(set)
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, out = set(), []
    for start in node_ids:
        if start in seen:
            continue
        comp, todo = set(), [start]
        while todo:
            n = todo.pop()
            if n in comp:
                continue
            comp.add(n)
            todo.extend(adj[n] - comp)
        seen |= comp
        out.append(frozenset(comp))
    return out


def check_trace(trace, push_edges, pull_edges, initiator):
    """Violations of the execution protocol in one phase's call trace.

    ``trace`` is a list of (method, node).  Returns a list of messages,
    empty when the trace is valid.
    """
    bad = []
    pos = defaultdict(dict)
    for i, (method, node) in enumerate(trace):
        if node in pos[method]:
            bad.append(f"{method} called twice on {node}")
        pos[method][node] = i
    nodes = set(pos["propagate"]) | set(pos["begin"]) | set(pos["end"])
    for method in ("propagate", "begin", "end"):
        missing = nodes - set(pos[method])
        if missing:
            bad.append(f"{method} never called on {sorted(missing)}")
    for u, v in list(push_edges) + list(pull_edges):
        if pos["propagate"].get(u, -1) > pos["propagate"].get(v, -1):
            bad.append(f"propagate: {v} before its upstream {u}")
    for u, v in push_edges:
        if pos["begin"].get(v, -1) > pos["begin"].get(u, -1):
            bad.append(f"begin: push source {u} before destination {v}")
    for u, v in pull_edges:
        if pos["begin"].get(u, -1) > pos["begin"].get(v, -1):
            bad.append(f"begin: puller {v} before pull source {u}")
    begins = sorted(pos["begin"], key=pos["begin"].get)
    ends = sorted(pos["end"], key=pos["end"].get)
    if ends != begins[::-1]:
        bad.append(f"end order {ends} is not the reverse of begin order {begins}")
    gos = [n for m, n in trace if m == "go"]
    if gos != [initiator]:
        bad.append(f"go called on {gos}, expected exactly [{initiator}]")
    else:
        g = pos["go"][initiator]
        if any(i > g for i in pos["begin"].values()) or any(i < g for i in pos["end"].values()):
            bad.append("go is not between the last begin and the first end")
    return bad


def random_phase_dag(rng, n):
    """A random connected single-initiator push/pull DAG on nodes 0..n-1.

    Returns (push_edges, pull_edges, initiator).  Built as a tree grown from
    the initiator: each new node is attached either as a push destination
    of an existing node (if that node has no outgoing pull) or as a pull
    source of an existing node.
    """
    push, pull = set(), set()
    init = 0
    out_pull = set()
    out_push = set()
    for v in range(1, n):
        u = rng.randrange(v)
        if rng.random() < 0.6 and u not in out_pull:
            push.add((u, v))
            out_push.add(u)
        else:
            # v is pulled by u; v must have no outgoing push (it has none yet)
            pull.add((v, u))
            out_pull.add(v)
    # a few extra push edges that respect a topological order of the tree
    order = _kahn(range(n), push | pull)
    rank = {v: i for i, v in enumerate(order)}
    for _ in range(rng.randint(0, n)):
        a, b = rng.sample(range(n), 2) if n > 1 else (0, 0)
        if a == b or rank[a] > rank[b]:
            a, b = b, a
        if a == b or b == init or a in out_pull or b in out_pull:
            continue
        push.add((a, b))
    return push, pull, init


def _kahn(nodes, edges):
    indeg = {v: 0 for v in nodes}
    succ = defaultdict(list)
    for u, v in edges:
        succ[u].append(v)
        indeg[v] += 1
    ready = [v for v in nodes if indeg[v] == 0]
    out = []
    while ready:
        u = ready.pop()
        out.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    return out


def relabel(rng, push, pull, n):
    perm = list(range(n))
    rng.shuffle(perm)
    return ({(perm[u], perm[v]) for u, v in push}, {(perm[u], perm[v]) for u, v in pull}, perm)


# -- misc -----------------------------------------------------------------------

def is_sorted(xs, key=None):
    key = key or (lambda x: x)
    return all(key(xs[i]) <= key(xs[i + 1]) for i in range(len(xs) - 1))


def seeded(seed):
    return random.Random(seed)
