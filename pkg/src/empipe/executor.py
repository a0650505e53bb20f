"""Run a pipeline phase by phase.

For every phase, in phase order: distribute memory over the phase's nodes,
call ``propagate`` in topological order, ``begin`` in the push-reversed
topological order, ``go`` on the initiator, and ``end`` in reverse begin
order.  Progress is reported as one 0..1 fraction for the whole pipeline,
weighting phases by the durations recorded in an execution time database.
"""
import os
import sys
import tempfile
import time
from collections import defaultdict
from dataclasses import dataclass, field

from . import memory
from .errors import PipelineError, TimeDbFormatError
from .flow_graph import FlowGraph, plan
from .memory import assign_memory
from .node import MetadataStore, Pipeable, close_window, collect_nodes, open_window
from .stream_io import BlockConfig

TIMEDB_HEADER = "EMTDB 1"


@dataclass(frozen=True)
class RunContext:
    """What nodes may ask of the framework while a pipeline runs."""

    config: BlockConfig
    tmpdir: str = None

    @property
    def block_size(self):
        return self.config.block_size_items

    def block_bytes(self, item_size):
        return self.config.block_size_items * item_size

    def temp_path(self, prefix):
        fd, path = tempfile.mkstemp(prefix=prefix, suffix=".ems", dir=self.tmpdir)
        os.close(fd)
        return path


# -- execution time database --------------------------------------------------------

@dataclass(frozen=True)
class TimeRecord:
    instance_size: int
    durations: tuple


@dataclass
class ExecutionTimeDb:
    records: dict = field(default_factory=dict)

    def get(self, pipeline_id):
        return self.records.get(pipeline_id)

    def record(self, pipeline_id, instance_size, durations):
        """Keep the run unless a larger instance of the same shape is stored.

        Returns True when the stored record changed.
        """
        durations = tuple(int(d) for d in durations)
        old = self.records.get(pipeline_id)
        if old is not None and len(old.durations) == len(durations) \
                and instance_size < old.instance_size:
            return False
        self.records[pipeline_id] = TimeRecord(instance_size, durations)
        return True


def _check_id(pipeline_id):
    if not pipeline_id or any(c in pipeline_id for c in "\t\r\n"):
        raise ValueError(f"pipeline id {pipeline_id!r} must be nonempty without tabs/newlines")


def db_load(path):
    """Read a database file; a missing file is an empty database."""
    db = ExecutionTimeDb()
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except FileNotFoundError:
        return db
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != TIMEDB_HEADER:
        raise TimeDbFormatError(path, 1, f"expected header {TIMEDB_HEADER!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) < 3:
            raise TimeDbFormatError(path, lineno, "expected id, n, k and k durations")
        pid = parts[0]
        try:
            n, k = int(parts[1]), int(parts[2])
            durations = tuple(int(p) for p in parts[3:])
        except ValueError:
            raise TimeDbFormatError(path, lineno, "non-integer field") from None
        if not pid:
            raise TimeDbFormatError(path, lineno, "empty pipeline id")
        if n < 0 or k < 1 or any(d < 0 for d in durations):
            raise TimeDbFormatError(path, lineno, "negative size, duration or phase count")
        if len(durations) != k:
            raise TimeDbFormatError(path, lineno, f"phase count {k} but {len(durations)} durations")
        if pid in db.records:
            raise TimeDbFormatError(path, lineno, f"duplicate pipeline id {pid!r}")
        db.records[pid] = TimeRecord(n, durations)
    return db


def db_store(path, db):
    """Write ``db`` atomically (temporary file, then rename)."""
    out = [TIMEDB_HEADER]
    for pid in sorted(db.records):
        _check_id(pid)
        rec = db.records[pid]
        out.append("\t".join([pid, str(rec.instance_size), str(len(rec.durations))]
                             + [str(d) for d in rec.durations]))
    data = "\n".join(out) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".timedb-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def phase_progress_weights(db, pipeline_id, phase_count):
    """Fraction of the run spent in each phase, uniform without usable history."""
    if phase_count < 1:
        raise ValueError("phase_count must be >= 1")
    rec = db.get(pipeline_id) if (db is not None and pipeline_id) else None
    if rec is not None and len(rec.durations) == phase_count:
        total = sum(rec.durations)
        if total > 0:
            return [d / total for d in rec.durations]
    return [1.0 / phase_count] * phase_count


# -- progress ---------------------------------------------------------------------

class ProgressIndicator:
    """Receives the overall fraction in [0, 1] and the current phase label."""

    def update(self, fraction, label):
        pass

    def done(self):
        pass


class CallbackProgress(ProgressIndicator):
    def __init__(self, fn):
        self.fn = fn

    def update(self, fraction, label):
        self.fn(fraction, label)


class TextProgress(ProgressIndicator):
    def __init__(self, stream=None, width=40):
        self.stream = stream or sys.stderr
        self.width = width
        self._last = None

    def update(self, fraction, label):
        filled = int(fraction * self.width)
        line = f"\r[{'#' * filled}{'.' * (self.width - filled)}] {int(fraction * 100):3d}% {label}"
        if line != self._last:
            self.stream.write(line.ljust(90))
            self.stream.flush()
            self._last = line

    def done(self):
        self.stream.write("\n")
        self.stream.flush()


def _as_indicator(progress):
    if progress is None:
        return ProgressIndicator()
    if isinstance(progress, ProgressIndicator):
        return progress
    if callable(progress):
        return CallbackProgress(progress)
    if hasattr(progress, "update"):
        return progress
    raise TypeError(f"not a progress indicator: {progress!r}")


class _Reporter:
    def __init__(self, indicator):
        self.indicator = indicator
        self.last = 0.0
        self.started = False

    def emit(self, fraction, label):
        fraction = min(1.0, max(self.last, fraction))
        if fraction > self.last or not self.started:
            self.started = True
            self.last = fraction
            self.indicator.update(fraction, label)


class _PhaseProgress:
    """Turns node step counts into the overall fraction for one phase."""

    def __init__(self, reporter, nodes, base, weight, label):
        self.reporter = reporter
        self.nodes = [n for n in nodes if n.declared_steps]
        self.total = sum(n.declared_steps for n in self.nodes)
        self.base = base
        self.weight = weight
        self.label = label
        for n in self.nodes:
            n._tracker = self
            n._next_report = n.completed_steps + max(1, n.declared_steps // 256)

    def local_fraction(self):
        if not self.total:
            return 0.0
        done = sum(min(n.completed_steps, n.declared_steps) for n in self.nodes)
        return done / self.total

    def report(self):
        for n in self.nodes:
            n._next_report = n.completed_steps + max(1, n.declared_steps // 256)
        self.reporter.emit(self.base + self.weight * self.local_fraction(), self.label)


# -- planning and running -------------------------------------------------------------

@dataclass
class PipelineRun:
    pipeline_id: str
    instance_size: int
    phase_durations: list
    plan: object = None
    graph: object = None


def _gather(pipeline):
    if isinstance(pipeline, Pipeable):
        nodes = collect_nodes([pipeline])
        boundary = list(getattr(pipeline, "_boundary", []))
    else:
        nodes = collect_nodes(list(pipeline))
        boundary = []
    return nodes, boundary


def _prepare(nodes, context):
    for node in nodes:
        node.context = context
        node.prepare()
    return FlowGraph.from_nodes(nodes)


def plan_pipeline(pipeline, config=None, tmpdir=None):
    """Validate and plan without running; returns ``(graph, plan)``.

    Memory shown per phase is what the nodes would get from the configured
    limit minus currently registered stream buffers.
    """
    config = config or BlockConfig()
    nodes, _ = _gather(pipeline)
    graph = _prepare(nodes, RunContext(config, tmpdir))
    ledger = memory.default_ledger()
    available = min(config.memory_limit_bytes, ledger.limit_bytes) - ledger.used_bytes
    return graph, plan(graph, available)


def _reachability(graph):
    succ = defaultdict(list)
    for u, v in graph.push_edges | graph.pull_edges | graph.blocking_edges:
        succ[u].append(v)
    reach = {n: {n} for n in graph.node_ids}
    for src in graph.node_ids:
        seen = {src}
        todo = [src]
        while todo:
            u = todo.pop()
            for v in succ[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
                    reach[v].add(src)
    return reach


def _call(phase_index, label, node, method):
    try:
        getattr(node, method)()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(
            f"phase {phase_index} ({label}): {node.name}#{node.node_id}.{method}() failed: {exc}",
            phase=phase_index, node=node,
        ) from exc


def run_pipeline(pipeline, n=0, progress=None, pipeline_id=None, config=None, tmpdir=None,
                 timedb=None):
    """Execute every phase of ``pipeline`` and return a :class:`PipelineRun`.

    ``timedb`` is an :class:`ExecutionTimeDb`, a path to a database file, or
    None for no history.  The database is updated only when ``pipeline_id``
    is given.
    """
    config = config or BlockConfig()
    if pipeline_id is not None:
        _check_id(pipeline_id)
    nodes, boundary = _gather(pipeline)
    context = RunContext(config, tmpdir)
    graph = _prepare(nodes, context)
    the_plan = plan(graph)
    by_id = {node.node_id: node for node in nodes}

    meta = MetadataStore(_reachability(graph))
    for key, value in boundary:
        meta.forward(MetadataStore.BOUNDARY, key, value)

    db_path = None
    if isinstance(timedb, (str, os.PathLike)):
        db_path = timedb
        db = db_load(db_path)
    else:
        db = timedb
    weights = phase_progress_weights(db, pipeline_id, len(the_plan))

    indicator = _as_indicator(progress)
    reporter = _Reporter(indicator)
    durations = []
    ledger = memory.default_ledger()

    for node in nodes:
        close_window(node)
        node._meta = meta
        node._grant = None
        node.completed_steps = 0

    reserved = False
    try:
        base = 0.0
        for phase in the_plan.phases:
            i = phase.index
            members = [by_id[k] for k in phase.node_ids]
            label = f"phase {i + 1}/{len(the_plan)}"
            reporter.emit(base, label)

            available = min(config.memory_limit_bytes, ledger.limit_bytes) - ledger.used_bytes
            assignment = assign_memory({m.node_id: m.memory_request for m in members}, available)
            phase.memory = assignment
            for m in members:
                m._grant = assignment.grants[m.node_id]
            ledger.reserve(assignment.total)
            reserved = True

            start = time.monotonic_ns()
            for k in phase.propagate_order:
                node = by_id[k]
                node._may_forward = True
                try:
                    _call(i, label, node, "propagate")
                finally:
                    node._may_forward = False

            tracker = _PhaseProgress(reporter, members, base, weights[i], label)
            for k in phase.begin_order:
                node = by_id[k]
                open_window(node)
                _call(i, label, node, "begin")
            _call(i, label, by_id[phase.initiator], "go")
            for k in phase.end_order:
                node = by_id[k]
                _call(i, label, node, "end")
                close_window(node)
            durations.append((time.monotonic_ns() - start) // 1_000_000)
            ledger.end_reservation()
            reserved = False

            tracker.nodes = []
            for m in members:
                m._tracker = None
                m._next_report = float("inf")
            base += weights[i]
            if i == len(the_plan) - 1:
                base = 1.0
            reporter.emit(base, label)
    except BaseException:
        for node in nodes:
            try:
                node.cleanup()
            except Exception:
                pass
        if reserved:
            ledger.end_reservation()
        raise
    finally:
        for node in nodes:
            open_window(node)
            node._meta = None
            node._tracker = None
            node._next_report = float("inf")

    done = getattr(indicator, "done", None)
    if done is not None:
        done()
    if pipeline_id is not None and db is not None:
        if db.record(pipeline_id, n, durations) and db_path is not None:
            db_store(db_path, db)
    return PipelineRun(pipeline_id, n, durations, the_plan, graph)

