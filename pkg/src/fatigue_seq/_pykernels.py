"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``FATIGUE_SEQ_PURE_PYTHON`` is set. Signatures and array layouts match the
Cython module exactly; the two are checked against each other in the tests.
"""
import numpy as np


def sigmoid(z):
    # tanh form never overflows, unlike 1 / (1 + exp(-z))
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def conv2d(xp, w, stride):
    """Cross-correlate a padded (Hp, Wp, M) map with (K, K, M, N) kernels."""
    hp, wp, _ = xp.shape
    k, _, _, n = w.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((ho, wo, n))
    for di in range(k):
        for dj in range(k):
            patch = xp[di:di + stride * (ho - 1) + 1:stride,
                       dj:dj + stride * (wo - 1) + 1:stride, :]
            out += patch @ w[di, dj]
    return out


def depthwise2d(xp, w, stride):
    """Per-channel cross-correlation of a padded map with (K, K, M) kernels."""
    hp, wp, m = xp.shape
    k = w.shape[0]
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((ho, wo, m))
    for di in range(k):
        for dj in range(k):
            patch = xp[di:di + stride * (ho - 1) + 1:stride,
                       dj:dj + stride * (wo - 1) + 1:stride, :]
            out += patch * w[di, dj]
    return out


def lstm_forward(X, W, b):
    """Unroll an LSTM over a batch of sequences from zero state.

    X is (B, L, D); W is (4H, D + H) acting on ``[x; h]`` with gate blocks
    ordered input, forget, output, candidate; b is (4H,).

    Returns activated gates (B, L, 4H), cell states (B, L + 1, H) and hidden
    states (B, L + 1, H); index 0 of the state arrays is the zero initial state.
    """
    bsz, length, d = X.shape
    hid = W.shape[0] // 4
    wx = W[:, :d]
    wh = W[:, d:]
    gates = np.empty((bsz, length, 4 * hid))
    cs = np.zeros((bsz, length + 1, hid))
    hs = np.zeros((bsz, length + 1, hid))
    xw = X @ wx.T + b
    for t in range(length):
        z = xw[:, t] + hs[:, t] @ wh.T
        a = gates[:, t]
        a[:, :3 * hid] = sigmoid(z[:, :3 * hid])
        a[:, 3 * hid:] = np.tanh(z[:, 3 * hid:])
        c = a[:, hid:2 * hid] * cs[:, t] + a[:, :hid] * a[:, 3 * hid:]
        cs[:, t + 1] = c
        hs[:, t + 1] = a[:, 2 * hid:3 * hid] * np.tanh(c)
    return gates, cs, hs


def lstm_backward(X, W, gates, cs, hs, dh_last):
    """Backpropagate a gradient on the final hidden state through time.

    Returns (dW, db, dX) with the shapes of W, b and X.
    """
    bsz, length, d = X.shape
    hid = W.shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dX = np.zeros_like(X)
    dh = np.array(dh_last, dtype=float)
    dc = np.zeros((bsz, hid))
    dz = np.empty((bsz, 4 * hid))
    for t in range(length - 1, -1, -1):
        a = gates[:, t]
        i = a[:, :hid]
        f = a[:, hid:2 * hid]
        o = a[:, 2 * hid:3 * hid]
        g = a[:, 3 * hid:]
        tc = np.tanh(cs[:, t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :hid] = dc * g * i * (1.0 - i)
        dz[:, hid:2 * hid] = dc * cs[:, t] * f * (1.0 - f)
        dz[:, 2 * hid:3 * hid] = dh * tc * o * (1.0 - o)
        dz[:, 3 * hid:] = dc * i * (1.0 - g * g)
        dW[:, :d] += dz.T @ X[:, t]
        dW[:, d:] += dz.T @ hs[:, t]
        db += dz.sum(axis=0)
        dinp = dz @ W
        dX[:, t] = dinp[:, :d]
        dh = dinp[:, d:]
        dc = dc * f
    return dW, db, dX
