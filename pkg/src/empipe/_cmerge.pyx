# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled k-way merge over sorted iterators.

Keeps a binary min-heap of source indices ordered by (key, source index),
matching the tie-breaking of :func:`heapq.merge`.
"""
from libc.stdlib cimport free, malloc


cdef class KWayMerge:
    cdef list _nexts
    cdef list _keys
    cdef list _items
    cdef object _keyfn
    cdef Py_ssize_t *_heap
    cdef Py_ssize_t _size

    def __cinit__(self, sources, key=None):
        cdef Py_ssize_t i, n
        cdef object it, item
        self._keyfn = key
        self._nexts = []
        self._keys = []
        self._items = []
        for src in sources:
            it = iter(src)
            self._nexts.append(it.__next__)
            self._keys.append(None)
            self._items.append(None)
        n = len(self._nexts)
        self._heap = <Py_ssize_t *>malloc((n + 1) * sizeof(Py_ssize_t))
        if self._heap == NULL:
            raise MemoryError()
        self._size = 0
        for i in range(n):
            try:
                item = self._nexts[i]()
            except StopIteration:
                continue
            self._items[i] = item
            self._keys[i] = item if key is None else key(item)
            self._heap[self._size] = i
            self._size += 1
        for i in range(self._size // 2 - 1, -1, -1):
            self._sift_down(i)

    def __dealloc__(self):
        if self._heap != NULL:
            free(self._heap)

    cdef inline bint _less(self, Py_ssize_t a, Py_ssize_t b) except -1:
        cdef object ka = self._keys[a]
        cdef object kb = self._keys[b]
        if ka < kb:
            return True
        if kb < ka:
            return False
        return a < b

    cdef int _sift_down(self, Py_ssize_t pos) except -1:
        cdef Py_ssize_t size = self._size
        cdef Py_ssize_t *heap = self._heap
        cdef Py_ssize_t top = heap[pos]
        cdef Py_ssize_t child
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            if child + 1 < size and self._less(heap[child + 1], heap[child]):
                child += 1
            if self._less(top, heap[child]):
                break
            heap[pos] = heap[child]
            pos = child
        heap[pos] = top
        return 0

    def __iter__(self):
        return self

    def __next__(self):
        cdef Py_ssize_t src
        cdef object item, nxt
        if self._size == 0:
            raise StopIteration
        src = self._heap[0]
        item = self._items[src]
        try:
            nxt = self._nexts[src]()
        except StopIteration:
            self._items[src] = None
            self._keys[src] = None
            self._size -= 1
            if self._size > 0:
                self._heap[0] = self._heap[self._size]
                self._sift_down(0)
            return item
        self._items[src] = nxt
        self._keys[src] = nxt if self._keyfn is None else self._keyfn(nxt)
        self._sift_down(0)
        return item
