"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
NumPy versions in ``_kernels_py`` are used. Setting ``WLRA_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("WLRA_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

row_spd_solve = _impl.row_spd_solve
box_mean = _impl.box_mean
cd_step = _impl.cd_step


def get_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
