"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise, or when
``MAXCLOAK_BACKEND=python`` is set, the numpy implementation is used.
``MAXCLOAK_THREADS`` caps the number of threads for the row-parallel
matrix-vector product (default 1).
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if os.environ.get("MAXCLOAK_BACKEND", "").lower() == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get_kernels(name=None):
    """Return the kernel module ``name`` (defaults to the active backend)."""
    name = BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


def default_threads():
    try:
        return max(1, int(os.environ.get("MAXCLOAK_THREADS", "1")))
    except ValueError:
        return 1
