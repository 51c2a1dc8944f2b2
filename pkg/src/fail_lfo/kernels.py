"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy fallback is loaded.  ``FAIL_LFO_BACKEND=python`` forces the fallback.
"""
import importlib
import os

from . import _fallback

BACKENDS = ("cython", "python")


def _load_compiled():
    try:
        return importlib.import_module("fail_lfo._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends():
    return ("cython", "python") if _compiled is not None else ("python",)


def get_backend(name=None):
    """Return the kernel module for ``name`` (``None`` means the default)."""
    if name is None:
        name = os.environ.get("FAIL_LFO_BACKEND", "").strip().lower() or None
    if name is None:
        return _compiled if _compiled is not None else _fallback
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}; choose from {BACKENDS}")


backend = get_backend()
