"""Pure Python k-way merge, used when the compiled kernel is unavailable."""
import heapq


def KWayMerge(sources, key=None):
    # heapq.merge breaks ties by source position, like the compiled kernel
    return heapq.merge(*sources, key=key)
