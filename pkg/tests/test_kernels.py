"""Backend equivalence and correctness of the compiled kernels."""

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse

from resolab import _core_py
from resolab.kernels import backend_name, chebyshev_step, tridiag_solve_many

rng = np.random.default_rng(7)


def random_stencil(n):
    diag = rng.normal(size=(n, n))
    px = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    py = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    px[:, -1] = 0.0
    py[-1, :] = 0.0
    return diag, px, py


def dense_from_stencil(diag, px, py):
    n = diag.shape[0]
    H = np.zeros((n * n, n * n), dtype=complex)
    idx = lambda i, j: i * n + j
    for i in range(n):
        for j in range(n):
            H[idx(i, j), idx(i, j)] = diag[i, j]
            if j + 1 < n:
                H[idx(i, j), idx(i, j + 1)] = -px[i, j]
                H[idx(i, j + 1), idx(i, j)] = -np.conj(px[i, j])
            if i + 1 < n:
                H[idx(i, j), idx(i + 1, j)] = -py[i, j]
                H[idx(i + 1, j), idx(i, j)] = -np.conj(py[i, j])
    return H


def test_stencil_matches_dense():
    n = 12
    diag, px, py = random_stencil(n)
    H = dense_from_stencil(diag, px, py)
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    y = np.zeros_like(v)
    chebyshev_step(diag, np.ascontiguousarray(px), np.ascontiguousarray(py),
                   np.ascontiguousarray(v), y, 1.0, 0.0)
    ref = (H @ v.ravel()).reshape(n, n)
    assert np.max(np.abs(y - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_stencil_is_hermitian_action():
    n = 10
    diag, px, py = random_stencil(n)
    u = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    w = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    hu = np.zeros_like(u)
    hw = np.zeros_like(w)
    chebyshev_step(diag, px, py, u, hu, 1.0, 0.0)
    chebyshev_step(diag, px, py, w, hw, 1.0, 0.0)
    lhs = np.vdot(w, hu)
    rhs = np.vdot(hw, u)
    assert abs(lhs - rhs) < 1e-11 * max(1.0, abs(lhs))


def test_step_combines_scalars_and_history():
    n = 8
    diag, px, py = random_stencil(n)
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    prev = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    hv = np.zeros_like(v)
    chebyshev_step(diag, px, py, v, hv, 1.0, 0.0)
    y = prev.copy()
    chebyshev_step(diag, px, py, v, y, 2.0, -0.7)
    ref = 2.0 * hv - 0.7 * v - prev
    assert np.max(np.abs(y - ref)) < 1e-12


def test_backends_agree_on_stencil():
    n = 16
    diag, px, py = random_stencil(n)
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    y0 = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    y1 = y0.copy()
    chebyshev_step(diag, px, py, v, y0, 1.3, 0.2)
    _core_py.chebyshev_step(diag, px, py, v, y1, 1.3, 0.2)
    assert np.max(np.abs(y0 - y1)) < 1e-13


def test_tridiag_matches_dense_solve():
    n = 60
    d = rng.normal(size=n)
    e = rng.normal(size=n - 1)
    T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    shifts = np.array([0.3 + 1e-3j, -1.2 + 0.5j, 2.0 + 1e-6j])
    out = tridiag_solve_many(d, e, shifts, rhs)
    for k, z in enumerate(shifts):
        ref = np.linalg.solve(T - z * np.eye(n), rhs)
        assert np.max(np.abs(out[k] - ref)) < 1e-9 * np.max(np.abs(ref))


def test_tridiag_backends_agree():
    n = 200
    d = rng.normal(size=n)
    e = rng.normal(size=n - 1)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    shifts = (rng.normal(size=8) + 1j * np.abs(rng.normal(size=8))).astype(complex)
    a = tridiag_solve_many(d, e, shifts, rhs)
    b = _core_py.tridiag_solve_many(d, e, shifts, rhs)
    assert np.max(np.abs(a - b)) < 1e-10 * max(1.0, np.max(np.abs(a)))


def test_backend_reports_name():
    assert backend_name() in ("cython", "python")
