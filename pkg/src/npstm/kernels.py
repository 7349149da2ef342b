"""Backend selection for the inner-loop kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``NPSTM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the interpreted fallback is used.  ``BACKEND`` names the choice.
"""
import os

from . import _kernels_py


def _load():
    if os.environ.get("NPSTM_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "cython"


_impl, BACKEND = _load()

cd_sweeps = _impl.cd_sweeps
jacobi_eigh = _impl.jacobi_eigh
kkt_violation = _impl.kkt_violation


def backend_module(name):
    """Return the kernel module for ``name`` (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
