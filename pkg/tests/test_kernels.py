"""The compiled and pure-Python backends must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from fatigue_seq import kernels

py = kernels.python_backend
cy = kernels.compiled_backend
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def close(a, b, tol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    return float(np.max(np.abs(a - b))) <= tol * scale if a.size else True


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_conv_parity(seed):
    rng = np.random.default_rng(seed)
    xp = rng.normal(size=(9, 7, 3))
    w = rng.normal(size=(3, 3, 3, 5))
    for s in (1, 2):
        assert close(cy.conv2d(xp, w, s), py.conv2d(xp, w, s))
    wd = rng.normal(size=(5, 5, 3))
    for s in (1, 2):
        assert close(cy.depthwise2d(xp, wd, s), py.depthwise2d(xp, wd, s))


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_lstm_parity(seed):
    rng = np.random.default_rng(seed)
    B, L, H = 7, 11, 6
    X = rng.normal(size=(B, L, 4))
    W = rng.normal(scale=0.5, size=(4 * H, 4 + H))
    b = rng.normal(scale=0.3, size=4 * H)
    fc, fp = cy.lstm_forward(X, W, b), py.lstm_forward(X, W, b)
    for a, r in zip(fc, fp):
        assert close(a, r)
    dh = rng.normal(size=(B, H))
    for a, r in zip(cy.lstm_backward(X, W, *fp, dh), py.lstm_backward(X, W, *fp, dh)):
        assert close(a, r, 1e-11)


def test_backend_selection_env():
    code = "from fatigue_seq import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, FATIGUE_SEQ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["FATIGUE_SEQ_PURE_PYTHON"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if cy is not None else "python")
