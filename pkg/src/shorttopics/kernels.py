"""Kernel backend selection.

The compiled extension is used when importable; setting
``SHORTTOPICS_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None


def available_backends() -> list[str]:
    names = ["python"]
    if _native is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for default)."""
    if name is None:
        if _native is not None and os.environ.get("SHORTTOPICS_PURE_PYTHON", "") in ("", "0"):
            return _native
        return _kernels_py
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _native is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _native
    raise ValueError(f"unknown backend {name!r}")
