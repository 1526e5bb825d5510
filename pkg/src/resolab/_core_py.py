"""Pure-numpy implementations of the hot numerical kernels.

Reference semantics for the compiled extension in _core.pyx; selected at
import time by kernels.py when the extension is unavailable or disabled.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def chebyshev_step(diag, px, py, v, y, a, b):
    """y <- a*(H v) + b*v - y for the 5-point link-phase stencil.

    H v = diag*v - px*(right) - conj(px)*(left) - py*(down) - conj(py)*(up)
    with Dirichlet zero outside the (n, n) grid; px[:, -1] and py[-1, :]
    are ignored.  In-place in y; v and diag untouched.
    """
    hv = diag * v
    hv[:, :-1] -= px[:, :-1] * v[:, 1:]
    hv[:, 1:] -= np.conj(px[:, :-1]) * v[:, :-1]
    hv[:-1, :] -= py[:-1, :] * v[1:, :]
    hv[1:, :] -= np.conj(py[:-1, :]) * v[:-1, :]
    np.multiply(y, -1.0, out=y)
    y += a * hv
    if b != 0.0:
        y += b * v


def tridiag_solve_many(d, e, shifts, rhs):
    """Solve (T - z) u = rhs for each z in shifts.

    T is real symmetric tridiagonal with diagonal d (n,) and off-diagonal
    e (n-1,).  Thomas sweep without pivoting: every caller shifts by a
    complex z with Im z != 0, which keeps the factorization bounded.
    Returns (len(shifts), n) complex.
    """
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    shifts = np.asarray(shifts, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    n = d.size
    m = shifts.size
    diag = d[None, :] - shifts[:, None]
    cp = np.empty((m, n - 1), dtype=complex)
    dp = np.empty((m, n), dtype=complex)
    dp[:, 0] = rhs[0] / diag[:, 0]
    cp[:, 0] = e[0] / diag[:, 0]
    for i in range(1, n - 1):
        denom = diag[:, i] - e[i - 1] * cp[:, i - 1]
        cp[:, i] = e[i] / denom
        dp[:, i] = (rhs[i] - e[i - 1] * dp[:, i - 1]) / denom
    denom = diag[:, n - 1] - e[n - 2] * cp[:, n - 2]
    dp[:, n - 1] = (rhs[n - 1] - e[n - 2] * dp[:, n - 2]) / denom
    for i in range(n - 2, -1, -1):
        dp[:, i] -= cp[:, i] * dp[:, i + 1]
    return dp
