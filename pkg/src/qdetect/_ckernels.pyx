# cython: language_level=3
"""Compiled row-wise encoder kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport erf, exp, sqrt, INFINITY

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def gelu_forward(x):
    cdef cnp.ndarray[double, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xf.shape[0]
    cdef double v
    with nogil:
        for i in range(n):
            v = xv[i]
            ov[i] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    return out.reshape(np.shape(x))


def gelu_backward(x, dy):
    cdef cnp.ndarray[double, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] gf = np.ascontiguousarray(dy, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] gv = gf
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xf.shape[0]
    cdef double v
    with nogil:
        for i in range(n):
            v = xv[i]
            ov[i] = gv[i] * (0.5 * (1.0 + erf(v * INV_SQRT2)) + v * INV_SQRT_2PI * exp(-0.5 * v * v))
    return out.reshape(np.shape(x))


def layernorm_forward(x, gain, bias, double eps):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(gain, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], d = xv.shape[1], i, j
    y = np.empty((n, d))
    xhat = np.empty((n, d))
    rstd = np.empty(n)
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] hv = xhat
    cdef double[::1] rv = rstd
    cdef double mean, var, r, c
    with nogil:
        for i in range(n):
            mean = 0.0
            for j in range(d):
                mean += xv[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                c = xv[i, j] - mean
                var += c * c
            var /= d
            r = 1.0 / sqrt(var + eps)
            rv[i] = r
            for j in range(d):
                c = (xv[i, j] - mean) * r
                hv[i, j] = c
                yv[i, j] = c * g[j] + b[j]
    return y, xhat, rstd


def layernorm_backward(dy, xhat, rstd, gain):
    cdef double[:, ::1] dv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef double[:, ::1] hv = np.ascontiguousarray(xhat, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(rstd, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(gain, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0], d = dv.shape[1], i, j
    dx = np.empty((n, d))
    dgain = np.zeros(d)
    dbias = np.zeros(d)
    cdef double[:, ::1] xv = dx
    cdef double[::1] dgv = dgain
    cdef double[::1] dbv = dbias
    cdef double m1, m2, t
    with nogil:
        for i in range(n):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                t = dv[i, j] * g[j]
                m1 += t
                m2 += t * hv[i, j]
                dgv[j] += dv[i, j] * hv[i, j]
                dbv[j] += dv[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                xv[i, j] = (dv[i, j] * g[j] - m1 - hv[i, j] * m2) * rv[i]
    return dx, dgain, dbias


def masked_softmax_forward(scores, key_mask):
    cdef double[:, :, ::1] sv = np.ascontiguousarray(scores, dtype=np.float64)
    cdef signed char[:, ::1] mv = np.ascontiguousarray(key_mask, dtype=np.int8)
    cdef Py_ssize_t nb = sv.shape[0], nr = sv.shape[1], nl = sv.shape[2], b, r, l
    out = np.empty((nb, nr, nl))
    cdef double[:, :, ::1] ov = out
    cdef double mx, tot, e
    with nogil:
        for b in range(nb):
            for r in range(nr):
                mx = -INFINITY
                for l in range(nl):
                    if mv[b, l] and sv[b, r, l] > mx:
                        mx = sv[b, r, l]
                tot = 0.0
                for l in range(nl):
                    if mv[b, l]:
                        e = exp(sv[b, r, l] - mx)
                        ov[b, r, l] = e
                        tot += e
                    else:
                        ov[b, r, l] = 0.0
                for l in range(nl):
                    ov[b, r, l] /= tot
    return out


def softmax_backward(probs, dprobs):
    shape = np.shape(probs)
    cdef Py_ssize_t nl = shape[len(shape) - 1]
    cdef double[:, ::1] pv = np.ascontiguousarray(probs, dtype=np.float64).reshape(-1, nl)
    cdef double[:, ::1] gv = np.ascontiguousarray(dprobs, dtype=np.float64).reshape(-1, nl)
    cdef Py_ssize_t n = pv.shape[0], i, l
    out = np.empty((n, nl))
    cdef double[:, ::1] ov = out
    cdef double inner
    with nogil:
        for i in range(n):
            inner = 0.0
            for l in range(nl):
                inner += gv[i, l] * pv[i, l]
            for l in range(nl):
                ov[i, l] = pv[i, l] * (gv[i, l] - inner)
    return out.reshape(shape)
