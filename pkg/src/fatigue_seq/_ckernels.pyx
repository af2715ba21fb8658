# cython: language_level=3
"""Compiled direct-loop versions of the hot kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double z) noexcept nogil:
    # exp overflows to inf for very negative z, giving exactly 0
    return 1.0 / (1.0 + exp(-z))


cdef inline double tanh(double z) noexcept nogil:
    # libm tanh is several times slower than expm1; this form keeps full
    # relative precision near zero
    cdef double e = expm1(-2.0 * fabs(z))
    cdef double r = -e / (e + 2.0)
    return r if z >= 0 else -r


def conv2d(const double[:, :, ::1] xp, const double[:, :, :, ::1] w, Py_ssize_t stride):
    cdef Py_ssize_t hp = xp.shape[0], wp = xp.shape[1], m = xp.shape[2]
    cdef Py_ssize_t k = w.shape[0], n = w.shape[3]
    cdef Py_ssize_t ho = (hp - k) // stride + 1
    cdef Py_ssize_t wo = (wp - k) // stride + 1
    out_arr = np.zeros((ho, wo, n))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, di, dj, c, o
    cdef double v
    with nogil:
        for y in range(ho):
            for x in range(wo):
                for di in range(k):
                    for dj in range(k):
                        for c in range(m):
                            v = xp[y * stride + di, x * stride + dj, c]
                            for o in range(n):
                                out[y, x, o] += v * w[di, dj, c, o]
    return out_arr


def depthwise2d(const double[:, :, ::1] xp, const double[:, :, ::1] w, Py_ssize_t stride):
    cdef Py_ssize_t hp = xp.shape[0], wp = xp.shape[1], m = xp.shape[2]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t ho = (hp - k) // stride + 1
    cdef Py_ssize_t wo = (wp - k) // stride + 1
    out_arr = np.zeros((ho, wo, m))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, di, dj, c
    with nogil:
        for y in range(ho):
            for x in range(wo):
                for di in range(k):
                    for dj in range(k):
                        for c in range(m):
                            out[y, x, c] += xp[y * stride + di, x * stride + dj, c] * w[di, dj, c]
    return out_arr


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k, double *a, int lda,
                      double *b, int ldb, double beta, double *c, int ldc) noexcept nogil:
    # column-major BLAS; a row-major (r, c) buffer is read as its transpose
    cdef double one = 1.0
    dgemm(ta, tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def lstm_forward(const double[:, :, ::1] X, const double[:, ::1] W, const double[::1] b):
    cdef int bsz = X.shape[0], length = X.shape[1], d = X.shape[2]
    cdef int g4 = W.shape[0], hid = g4 // 4
    gates_arr = np.empty((bsz, length, g4))
    cs_arr = np.zeros((bsz, length + 1, hid))
    hs_arr = np.zeros((bsz, length + 1, hid))
    cdef double[:, ::1] WxT = np.ascontiguousarray(np.asarray(W)[:, :d].T)
    cdef double[:, ::1] WhT = np.ascontiguousarray(np.asarray(W)[:, d:].T)
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] hs = hs_arr
    cdef double *a
    cdef int s, t, r, j
    cdef double c
    with nogil:
        # input projections of every step at once: (B*L, D) @ (D, 4H)
        _gemm(b"N", b"N", g4, bsz * length, d, &WxT[0, 0], g4,
              <double *>&X[0, 0, 0], d, 0.0, &gates[0, 0, 0], g4)
        for t in range(length):
            if t > 0:
                # recurrent term for the whole batch: (B, H) @ (H, 4H)
                _gemm(b"N", b"N", g4, bsz, hid, &WhT[0, 0], g4,
                      &hs[0, t, 0], (length + 1) * hid, 1.0, &gates[0, t, 0], length * g4)
            for s in range(bsz):
                a = &gates[s, t, 0]
                for r in range(3 * hid):
                    a[r] = _sigmoid(a[r] + b[r])
                for r in range(3 * hid, g4):
                    a[r] = tanh(a[r] + b[r])
                for j in range(hid):
                    c = a[hid + j] * cs[s, t, j] + a[j] * a[3 * hid + j]
                    cs[s, t + 1, j] = c
                    hs[s, t + 1, j] = a[2 * hid + j] * tanh(c)
    return gates_arr, cs_arr, hs_arr


def lstm_backward(const double[:, :, ::1] X, const double[:, ::1] W,
                  const double[:, :, ::1] gates, const double[:, :, ::1] cs,
                  const double[:, :, ::1] hs, const double[:, ::1] dh_last):
    cdef int bsz = X.shape[0], length = X.shape[1], d = X.shape[2]
    cdef int g4 = W.shape[0], hid = g4 // 4
    cdef double[:, ::1] Wx = np.ascontiguousarray(np.asarray(W)[:, :d])
    cdef double[:, ::1] Wh = np.ascontiguousarray(np.asarray(W)[:, d:])
    dZ_arr = np.empty((bsz, length, g4))
    dWxT_arr = np.zeros((d, g4))
    dWhT_arr = np.zeros((hid, g4))
    db_arr = np.zeros(g4)
    dX_arr = np.empty((bsz, length, d))
    cdef double[:, :, ::1] dZ = dZ_arr
    cdef double[:, ::1] dWxT = dWxT_arr
    cdef double[:, ::1] dWhT = dWhT_arr
    cdef double[::1] db = db_arr
    cdef double[:, :, ::1] dX = dX_arr
    cdef double[:, ::1] dh = np.array(dh_last, dtype=np.float64, order="C")
    cdef double[:, ::1] dc = np.zeros((bsz, hid))
    cdef const double *a
    cdef double *dz
    cdef int s, t, r, j
    cdef double ig, fg, og, gg, tc, dcj
    with nogil:
        for t in range(length - 1, -1, -1):
            for s in range(bsz):
                a = &gates[s, t, 0]
                dz = &dZ[s, t, 0]
                for j in range(hid):
                    ig = a[j]
                    fg = a[hid + j]
                    og = a[2 * hid + j]
                    gg = a[3 * hid + j]
                    tc = tanh(cs[s, t + 1, j])
                    dcj = dc[s, j] + dh[s, j] * og * (1.0 - tc * tc)
                    dz[j] = dcj * gg * ig * (1.0 - ig)
                    dz[hid + j] = dcj * cs[s, t, j] * fg * (1.0 - fg)
                    dz[2 * hid + j] = dh[s, j] * tc * og * (1.0 - og)
                    dz[3 * hid + j] = dcj * ig * (1.0 - gg * gg)
                    dc[s, j] = dcj * fg
            if t > 0:
                # dh for the previous step: (B, 4H) @ (4H, H)
                _gemm(b"N", b"N", hid, bsz, g4, &Wh[0, 0], hid,
                      &dZ[0, t, 0], length * g4, 0.0, &dh[0, 0], hid)
        for s in range(bsz):
            for t in range(length):
                for r in range(g4):
                    db[r] += dZ[s, t, r]
            # hidden-weight gradient: sum_t h_t^T dz_t for this sequence
            _gemm(b"N", b"T", g4, hid, length, &dZ[s, 0, 0], g4,
                  <double *>&hs[s, 0, 0], hid, 1.0, &dWhT[0, 0], g4)
        _gemm(b"N", b"T", g4, d, bsz * length, &dZ[0, 0, 0], g4,
              <double *>&X[0, 0, 0], d, 0.0, &dWxT[0, 0], g4)
        _gemm(b"N", b"N", d, bsz * length, g4, &Wx[0, 0], d,
              &dZ[0, 0, 0], g4, 0.0, &dX[0, 0, 0], d)
    dW = np.concatenate([dWxT_arr.T, dWhT_arr.T], axis=1)
    return dW, db_arr, dX_arr
