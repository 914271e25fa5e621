"""Backend selection for the pair-accumulation kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``PHASELAB_PURE_PYTHON`` is set to a non-empty value,
the numpy/scipy implementation is used.  Both give identical integer counts.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("PHASELAB_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = _BACKENDS[BACKEND]
coincidence_counts = _impl.coincidence_counts
pair_histograms = _impl.pair_histograms


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    name = BACKEND if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {available_backends()}") from None
