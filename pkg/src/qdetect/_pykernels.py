"""Numpy implementations of the row-wise encoder kernels.

Reference path and fallback for :mod:`qdetect._ckernels`; both expose the
same functions with the same array contracts.
"""
import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def gelu_forward(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(x, dy):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def layernorm_forward(x, gain, bias, eps):
    """Normalize the rows of ``x[N, D]``; returns ``(y, xhat, rstd)``."""
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layernorm_backward(dy, xhat, rstd, gain):
    """Returns ``(dx, dgain, dbias)``."""
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgain, dbias


def masked_softmax_forward(scores, key_mask):
    """Softmax over the last axis of ``scores[B, R, L]``.

    Keys with ``key_mask[b, l] == 0`` get probability exactly 0. Every row
    must have at least one valid key.
    """
    valid = key_mask.astype(bool)[:, None, :]
    s = np.where(valid, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, dprobs):
    """Gradient w.r.t. pre-softmax scores for rows along the last axis."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)
