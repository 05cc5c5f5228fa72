# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: magnetic 5-point stencil, Crank-Nicolson Jacobi
solve and implicit QL on a real symmetric tridiagonal matrix."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, hypot

cnp.import_array()


cdef inline double complex _hop(const double complex[:, ::1] x,
                                const double complex[:, ::1] ux,
                                const double complex[:, ::1] uy,
                                Py_ssize_t i, Py_ssize_t j,
                                Py_ssize_t nx, Py_ssize_t ny) noexcept nogil:
    cdef double complex acc = 0
    if i + 1 < nx:
        acc = acc + ux[i, j] * x[i + 1, j]
    if i > 0:
        acc = acc + ux[i - 1, j].conjugate() * x[i - 1, j]
    if j + 1 < ny:
        acc = acc + uy[i, j] * x[i, j + 1]
    if j > 0:
        acc = acc + uy[i, j - 1].conjugate() * x[i, j - 1]
    return acc


def stencil_apply(psi, ux, uy, diag, double inv_h2):
    cdef const double complex[:, ::1] p = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef const double complex[:, ::1] uxv = ux
    cdef const double complex[:, ::1] uyv = uy
    cdef const double[:, ::1] d = diag
    out = np.empty((p.shape[0], p.shape[1]), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1], i, j
    with nogil:
        for i in range(nx):
            for j in range(ny):
                o[i, j] = d[i, j] * p[i, j] - inv_h2 * _hop(p, uxv, uyv, i, j, nx, ny)
    return out


def cn_jacobi_solve(b, x0, ux, uy, diag, double inv_h2, double tau,
                    double tol, int max_sweeps):
    """Solve (1 + i tau H) x = b by Jacobi sweeps; returns (x, sweeps, update)."""
    cdef const double complex[:, ::1] bb = np.ascontiguousarray(b, dtype=np.complex128)
    cdef const double complex[:, ::1] uxv = ux
    cdef const double complex[:, ::1] uyv = uy
    cdef const double[:, ::1] d = diag
    xa = np.array(x0, dtype=np.complex128, order="C", copy=True)
    ya = np.empty_like(xa)
    cdef double complex[:, ::1] x = xa
    cdef double complex[:, ::1] y = ya
    cdef double complex[:, ::1] tmp
    cdef Py_ssize_t nx = x.shape[0], ny = x.shape[1], i, j
    cdef double complex val, it = 1j * tau
    cdef double upd = 0.0, bnorm = 0.0, dr, di
    cdef int sweep = 0
    inva = np.empty((nx, ny), dtype=np.complex128)
    cdef double complex[:, ::1] inv = inva
    cdef double complex coupling = it * inv_h2
    for i in range(nx):
        for j in range(ny):
            bnorm += bb[i, j].real * bb[i, j].real + bb[i, j].imag * bb[i, j].imag
            inv[i, j] = 1.0 / (1.0 + it * d[i, j])
    bnorm = sqrt(bnorm)
    if bnorm == 0.0:
        return np.zeros_like(xa), 0, 0.0
    with nogil:
        while sweep < max_sweeps:
            sweep += 1
            upd = 0.0
            for i in range(nx):
                for j in range(ny):
                    val = (bb[i, j] + coupling * _hop(x, uxv, uyv, i, j, nx, ny)) * inv[i, j]
                    dr = val.real - x[i, j].real
                    di = val.imag - x[i, j].imag
                    upd += dr * dr + di * di
                    y[i, j] = val
            tmp = x
            x = y
            y = tmp
            upd = sqrt(upd) / bnorm
            if upd <= tol:
                break
    return np.asarray(x), sweep, upd


def tql2(double[::1] d, double[::1] e, double[:, ::1] z, int max_iter=60):
    """Implicit QL on a symmetric tridiagonal matrix; eigenvalues overwrite ``d``.

    ``e[i]`` couples rows i and i+1 (the last entry is ignored). Rotations are
    accumulated into the rows of ``z``, so on exit row j of ``z`` holds the
    eigenvector of ``d[j]`` when ``z`` starts as the identity.
    """
    cdef Py_ssize_t n = d.shape[0], nz = z.shape[1]
    cdef Py_ssize_t l, m, i, k
    cdef int it
    cdef double dd, g, r, s, c, p, f, b
    cdef bint underflow
    if n == 0:
        return
    e[n - 1] = 0.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = fabs(d[m]) + fabs(d[m + 1])
                if fabs(e[m]) <= 2.220446049250313e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise ArithmeticError("QL iteration did not converge")
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = hypot(g, 1.0)
            if g >= 0:
                g = d[m] - d[l] + e[l] / (g + r)
            else:
                g = d[m] - d[l] + e[l] / (g - r)
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            with nogil:
                while i >= l:
                    f = s * e[i]
                    b = c * e[i]
                    r = hypot(f, g)
                    e[i + 1] = r
                    if r == 0.0:
                        d[i + 1] -= p
                        e[m] = 0.0
                        underflow = True
                        break
                    s = f / r
                    c = g / r
                    g = d[i + 1] - p
                    r = (d[i] - g) * s + 2.0 * c * b
                    p = s * r
                    d[i + 1] = g + p
                    g = c * r - b
                    for k in range(nz):
                        f = z[i + 1, k]
                        z[i + 1, k] = s * z[i, k] + c * f
                        z[i, k] = c * z[i, k] - s * f
                    i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
