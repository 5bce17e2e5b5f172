"""Kernel selection: compiled ``_core`` when importable, else ``_pycore``.

Set ``NETSENSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pycore

NAME = "python"
marcum_pair = _pycore.marcum_pair
estep_phi = _pycore.estep_phi

if not os.environ.get("NETSENSE_PURE_PYTHON"):
    try:
        from . import _core
    except ImportError:
        pass
    else:
        NAME = "compiled"
        marcum_pair = _core.marcum_pair
        estep_phi = _core.estep_phi


def available():
    """Names of the kernel implementations importable in this process."""
    names = ["python"]
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return names
    return names + ["compiled"]


def kernels(name=None):
    """Return the module implementing ``name`` (default: the active one)."""
    name = name or NAME
    if name == "python":
        return _pycore
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
