"""Pick the path kernels: compiled if importable, numpy otherwise.

Set ``MOVBOUND_BACKEND=python`` to force the numpy kernels.
"""
import os

from . import _fallback

BACKEND_ENV = "MOVBOUND_BACKEND"

compiled = None
if os.environ.get(BACKEND_ENV, "").lower() not in ("python", "numpy"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else _fallback
name = "cython" if compiled is not None else "python"


def get(backend: str | None = None):
    """Return ``(name, module)`` for ``backend`` in {None, 'cython', 'python'}."""
    if backend is None:
        return name, kernels
    if backend == "python":
        return "python", _fallback
    if backend == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        return "cython", compiled
    raise ValueError(f"unknown backend {backend!r}")
