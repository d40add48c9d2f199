"""LSTM recurrence kernels.

The compiled extension ``_lstm_cy`` is used when it imports; otherwise the
numpy implementation in ``_lstm_py`` takes over. Set ``MTM_PURE_PYTHON=1``
to force the fallback.
"""
import os

from . import _lstm_py

BACKEND = "python"
_impl = _lstm_py

if os.environ.get("MTM_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _lstm_cy
    except ImportError:
        pass
    else:
        _impl = _lstm_cy
        BACKEND = "cython"


def lstm_forward(xp, w_h, lengths, reverse):
    return _impl.lstm_forward(xp, w_h, lengths, reverse)


def lstm_backward(dh_out, w_h, lengths, reverse, h, c, gates):
    return _impl.lstm_backward(dh_out, w_h, lengths, reverse, h, c, gates)


def available_backends():
    """Modules implementing the kernel contract, keyed by name."""
    out = {"python": _lstm_py}
    try:
        from . import _lstm_cy
    except ImportError:
        return out
    out["cython"] = _lstm_cy
    return out
