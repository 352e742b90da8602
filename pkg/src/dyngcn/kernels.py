"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``DYNGCN_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("DYNGCN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

lstm_cell_forward = _impl.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
signed_rank_upper_count = _impl.signed_rank_upper_count

__all__ = ["BACKEND", "lstm_cell_forward", "lstm_cell_backward", "signed_rank_upper_count"]
