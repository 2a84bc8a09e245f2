"""Dispatch between the compiled stepping kernel and the numpy fallback.

The compiled extension is optional; at import we pick whichever is present.
Both implementations run the same recurrences in the same order, so results
agree to the last BLAS rounding (they call the same dgemv underneath).
"""

from __future__ import annotations

import numpy as np

try:
    from . import _kernels
except ImportError:  # pragma: no cover - depends on build environment
    _kernels = None

HAVE_COMPILED = _kernels is not None


def _orbit_one_py(S, x0, nsteps, stride, out):
    x = x0.copy()
    out[0] = x
    row = 1
    for k in range(1, nsteps + 1):
        x = S @ x
        if k % stride == 0:
            out[row] = x
            row += 1
    return row


def _orbit_two_py(S1, S2, x0, x1, nsteps, stride, out):
    xp, xc = x0.copy(), x1.copy()
    out[0] = xp
    row = 1
    if stride == 1:
        out[row] = xc
        row += 1
    for k in range(2, nsteps + 1):
        xp, xc = xc, S1 @ xc + S2 @ xp
        if k % stride == 0:
            out[row] = xc
            row += 1
    return row


def orbit_one(S, x0, nsteps, stride=1, impl="auto"):
    """Sampled orbit of x_{k+1} = S x_k; rows are x_0, x_stride, x_2*stride, ..."""
    S = np.ascontiguousarray(S, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    nsamples = nsteps // stride + 1
    out = np.empty((nsamples, S.shape[0]))
    use_c = _kernels is not None if impl == "auto" else impl == "compiled"
    if use_c and _kernels is None:
        raise RuntimeError("compiled kernels requested but not built")
    fn = _kernels.orbit_one if use_c else _orbit_one_py
    rows = fn(S, x0, nsteps, stride, out)
    return out[:rows]


def orbit_two(S1, S2, x0, x1, nsteps, stride=1, impl="auto"):
    """Sampled orbit of x_{k+1} = S1 x_k + S2 x_{k-1}."""
    S1 = np.ascontiguousarray(S1, dtype=float)
    S2 = np.ascontiguousarray(S2, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    x1 = np.ascontiguousarray(x1, dtype=float)
    nsamples = nsteps // stride + 1
    out = np.empty((nsamples, S1.shape[0]))
    use_c = _kernels is not None if impl == "auto" else impl == "compiled"
    if use_c and _kernels is None:
        raise RuntimeError("compiled kernels requested but not built")
    fn = _kernels.orbit_two if use_c else _orbit_two_py
    rows = fn(S1, S2, x0, x1, nsteps, stride, out)
    return out[:rows]
