"""Pick the compiled split kernels when available, else the numpy fallback.

Set ``PLAYERVAL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _splitter_py

if os.environ.get("PLAYERVAL_PURE_PYTHON"):
    _impl = _splitter_py
else:
    try:
        from . import _splitter as _impl
    except ImportError:
        _impl = _splitter_py

best_split = _impl.best_split
apply_tree = _impl.apply_tree
Splitter = _impl.Splitter
BACKEND = "cython" if _impl is not _splitter_py else "python"

__all__ = ["best_split", "apply_tree", "Splitter", "BACKEND"]
