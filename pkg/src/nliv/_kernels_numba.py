"""Jitted wrappers around the loop-form kernels."""

import numba

from . import _kernels_impl

_jit = numba.njit(cache=True, nogil=True)

boot_sir = _jit(_kernels_impl.boot_sir_impl)
cd_path = _jit(_kernels_impl.cd_path_impl)
knn_means = _jit(_kernels_impl.knn_means_impl)
