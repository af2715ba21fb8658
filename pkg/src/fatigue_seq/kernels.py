"""Kernel backend selection.

The compiled ``_ckernels`` extension is preferred; ``_pykernels`` is the
fallback when the extension was not built or when the environment variable
``FATIGUE_SEQ_PURE_PYTHON`` is set to a non-empty value other than ``0``.
Both expose ``conv2d``, ``depthwise2d``, ``lstm_forward`` and ``lstm_backward``.
"""
import os

import numpy as np

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("FATIGUE_SEQ_PURE_PYTHON", "") in ("", "0"):
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d(xp, w, stride=1):
    return _impl.conv2d(_c(xp), _c(w), int(stride))


def depthwise2d(xp, w, stride=1):
    return _impl.depthwise2d(_c(xp), _c(w), int(stride))


def lstm_forward(X, W, b):
    return _impl.lstm_forward(_c(X), _c(W), _c(b))


def lstm_backward(X, W, gates, cs, hs, dh_last):
    return _impl.lstm_backward(_c(X), _c(W), _c(gates), _c(cs), _c(hs), _c(dh_last))
