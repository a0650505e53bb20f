from .basic import (
    Collect,
    Filter,
    IterablePullSource,
    IterableSource,
    Map,
    PullCollect,
    StreamSink,
    StreamSource,
    filter_items,
    map_items,
    stream_sink,
    stream_source,
)
from .buffers import delay, passive_delay, passive_reverse, reverse
from .parallel import DEFAULT_BATCH_SIZE, Parallel, ParallelConfig, parallel
from .sorting import (
    PassiveSorter,
    RunSet,
    Sorter,
    compute_fanout,
    expected_passes,
    external_sort,
    merge,
    passive_sorter,
    reduce_runs,
    run_formation,
    sort,
)
