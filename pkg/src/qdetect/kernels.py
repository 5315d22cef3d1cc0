"""Backend selection for the encoder's row-wise kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. :func:`use_backend` switches explicitly, which the
tests and the benchmark rely on.
"""
import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # no compiler at install time
    _ckernels = None

_NAMES = (
    "gelu_forward",
    "gelu_backward",
    "layernorm_forward",
    "layernorm_backward",
    "masked_softmax_forward",
    "softmax_backward",
)

backend = None


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use_backend(name):
    """Route the module-level kernel functions to ``"cython"`` or ``"python"``."""
    global backend
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available in this install")
        impl = _ckernels
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(impl, fn)
    backend = name
    log.debug("kernel backend: %s", name)


use_backend("cython" if _ckernels is not None else "python")
