"""Discontinuous Galerkin solver for pathogen spread coupled to tissue atrophy.

Concentration follows a Fisher-Kolmogorov equation, the atrophy rate a
logistic law whose carrying capacity drops with concentration, and the
displacement linear elasticity with an isotropic growth tensor.
"""
import os

_threads = os.environ.get("ATROPHYDG_THREADS")
if _threads:
    # cap BLAS/OpenMP pools; only effective if numpy is not imported yet
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"


def worker_count() -> int:
    """Worker cap from ATROPHYDG_THREADS (default 1, the assembly is serial)."""
    try:
        return max(1, int(os.environ.get("ATROPHYDG_THREADS", "1")))
    except ValueError:
        return 1
