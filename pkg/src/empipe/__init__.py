"""Pipelined external-memory streams, sorting and phase scheduling."""
from .errors import (
    BlockingComponentConflict,
    ContractViolation,
    EmpipeError,
    GraphValidationError,
    InsufficientMemoryError,
    LifecycleError,
    MissingMetadataError,
    PipelineError,
    StreamError,
    StreamFormatError,
)
from .executor import (
    ExecutionTimeDb,
    ProgressIndicator,
    TextProgress,
    db_load,
    db_store,
    plan_pipeline,
    run_pipeline,
)
from .flow_graph import FlowGraph, format_plan
from .memory import UNBOUNDED, MemoryRequest, assign_memory, set_memory_limit
from .node import Node, Pipeline
from .stream_io import BlockConfig, open_stream, reset_counters, snapshot_counters

__version__ = "0.1.0"
