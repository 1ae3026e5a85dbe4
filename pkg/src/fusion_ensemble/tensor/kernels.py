"""Backend selection for the convolution unfold kernels.

The compiled extension is preferred. Set ``FUSION_ENSEMBLE_PURE_PYTHON=1`` to
force the numpy fallback (the benchmark and the test suite compare both).
"""

import os

import numpy as np

from . import _vol2col_py as python_backend

try:
    if os.environ.get("FUSION_ENSEMBLE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python forced")
    from . import _vol2col as compiled_backend
except ImportError:
    compiled_backend = None

COMPILED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
BACKEND = "compiled" if compiled_backend is not None else "python"
_impl = compiled_backend if compiled_backend is not None else python_backend


def get_backend(name=None):
    """Return the kernel module by name ("compiled" / "python"); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built; run `python setup.py build_ext --inplace`")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")


def vol2col(x, kt, kh, kw, st, sh, sw):
    return _impl.vol2col(x, kt, kh, kw, st, sh, sw)


def col2vol(cols, shape, kt, kh, kw, st, sh, sw):
    return _impl.col2vol(cols, shape, kt, kh, kw, st, sh, sw)
