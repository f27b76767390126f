"""Backend selection for the stepping kernels.

The compiled extension is used when importable; otherwise (or when
``STOCHFLUX_PURE_PYTHON=1``) the numpy implementation is used.  Both expose
``advance``, ``hopf_advance`` and ``max_abs_hprime`` with identical
signatures.
"""
import os

from . import _core_py

if os.environ.get("STOCHFLUX_PURE_PYTHON", "") not in ("", "0"):
    core = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as core
        BACKEND = "cython"
    except ImportError:  # extension not built
        core = _core_py
        BACKEND = "python"

__all__ = ["core", "BACKEND", "_core_py"]
