"""Selects the compiled hot-loop kernels, falling back to pure Python.

Set ``EMPIPE_PURE_PYTHON=1`` to force the fallback (the benchmark and the
equivalence tests use this to compare both).
"""
import os

from . import _pymerge

IMPLEMENTATION = "python"
py_merge = _pymerge.KWayMerge
compiled_merge = None

try:
    from ._cmerge import KWayMerge as compiled_merge
except ImportError:  # extension not built
    compiled_merge = None

if compiled_merge is not None and not os.environ.get("EMPIPE_PURE_PYTHON"):
    kway_merge = compiled_merge
    IMPLEMENTATION = "cython"
else:
    kway_merge = py_merge
