"""Kernel backend selection.

The compiled extension is preferred; set ``HAAD_PURE_PYTHON=1`` to force the
numpy fallback (used by the benchmark and the backend parity tests).
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HAAD_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

householder_product = _impl.householder_product
householder_product_grad = _impl.householder_product_grad
knn_mean_distance = _impl.knn_mean_distance

__all__ = [
    "BACKEND",
    "householder_product",
    "householder_product_grad",
    "knn_mean_distance",
]
