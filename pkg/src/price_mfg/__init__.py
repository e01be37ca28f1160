"""Price formation in electricity markets as a constrained mean-field game."""
import os

# PRICE_MFG_THREADS caps BLAS/OpenMP pools; it must be set before numpy loads.
_threads = os.environ.get("PRICE_MFG_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .kernels import BACKEND  # noqa: E402

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
