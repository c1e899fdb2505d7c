"""Fused LSTM / tree-LSTM gate kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is.  Set ``TREESENT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pure

BACKEND = "python"
_impl = _pure

if os.environ.get("TREESENT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _fast as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pure

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
tree_forward = _impl.tree_forward
tree_backward = _impl.tree_backward

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "tree_forward", "tree_backward"]
