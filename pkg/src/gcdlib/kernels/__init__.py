"""Backend selection for the hot numeric kernels.

The environment variable GCDLIB_BACKEND picks the implementation:

  auto   (default) use the numba-compiled kernels when numba imports,
         otherwise fall back to pure numpy
  numba  require the compiled kernels; error if numba is unavailable
  numpy  force the pure-numpy fallback

Both backends implement the same functions with the same semantics; results
may differ by float rounding in the last ulps (different exp/erf libraries),
and each backend is individually deterministic.
"""

import os

from gcdlib.errors import ConfigError
from gcdlib.kernels import numpy_impl

_KERNEL_NAMES = [
    "softmax_rows",
    "softmax_rows_bwd",
    "log_softmax_rows",
    "log_softmax_rows_bwd",
    "l2norm_rows",
    "l2norm_rows_bwd",
    "sigmoid",
    "sigmoid_bwd",
    "gelu",
    "gelu_bwd",
    "log_clamped",
    "log_clamped_bwd",
    "sgd_update",
    "average_ranks",
    "lap_min",
]


def _load_numba_impl():
    try:
        from gcdlib.kernels import numba_impl
    except ImportError:
        return None
    return numba_impl


def _select_backend():
    choice = os.environ.get("GCDLIB_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ConfigError(f"GCDLIB_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy", numpy_impl
    impl = _load_numba_impl()
    if impl is not None:
        return "numba", impl
    if choice == "numba":
        raise ConfigError("GCDLIB_BACKEND=numba but numba could not be imported")
    return "numpy", numpy_impl


BACKEND, _impl = _select_backend()

for _name in _KERNEL_NAMES:
    globals()[_name] = getattr(_impl, _name)


def get_impl(backend):
    """Return the raw kernel module for a named backend (for benchmarks/tests)."""
    if backend == "numpy":
        return numpy_impl
    if backend == "numba":
        impl = _load_numba_impl()
        if impl is None:
            raise ConfigError("numba backend requested but numba could not be imported")
        return impl
    raise ConfigError(f"unknown kernel backend {backend!r}")


def available_backends():
    backends = ["numpy"]
    if _load_numba_impl() is not None:
        backends.append("numba")
    return backends


__all__ = _KERNEL_NAMES + ["BACKEND", "get_impl", "available_backends"]
