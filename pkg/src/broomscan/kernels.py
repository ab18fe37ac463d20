"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``BROOMSCAN_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking backend agreement).
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("BROOMSCAN_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

sigmoid = _active.sigmoid
lstm_gates_forward = _active.lstm_gates_forward
lstm_gates_backward = _active.lstm_gates_backward
histogram_counts = _active.histogram_counts

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "sigmoid",
    "lstm_gates_forward",
    "lstm_gates_backward",
    "histogram_counts",
]
