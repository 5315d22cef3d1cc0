"""Central finite-difference oracle shared by the gradient tests."""
import numpy as np


def numeric_grad(f, arr, step=1e-4):
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + step
        fp = f()
        arr[idx] = old - step
        fm = f()
        arr[idx] = old
        out[idx] = (fp - fm) / (2 * step)
    return out


def max_rel_error(analytic, numeric, floor=1e-8):
    """Largest elementwise |a - n| / max(|a|, |n|), skipping entries where both are below ``floor``."""
    den = np.maximum(np.abs(analytic), np.abs(numeric))
    keep = den > floor
    if not keep.any():
        return float(np.abs(analytic - numeric).max(initial=0.0))
    return float((np.abs(analytic - numeric)[keep] / den[keep]).max())
