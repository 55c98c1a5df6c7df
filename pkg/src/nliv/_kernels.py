"""Backend dispatch for the hot kernels.

Set NLIV_BACKEND=numpy to force the vectorized fallbacks; the default uses
the jitted loop kernels when numba imports cleanly.
"""

from ._backend import BACKEND

if BACKEND == "numba":
    from ._kernels_numba import boot_sir, cd_path, knn_means
else:
    from ._kernels_numpy import boot_sir, cd_path, knn_means

__all__ = ["boot_sir", "cd_path", "knn_means"]
