"""NumPy implementations of the compiled kernels in ``_ckernels.pyx``.

Same signatures and results (to rounding); used when the extension is not
built or when ``MAGBERRY_PURE_PYTHON=1``.
"""

import math

import numpy as np


def _hop(x, ux, uy):
    acc = np.zeros_like(x)
    acc[:-1, :] += ux * x[1:, :]
    acc[1:, :] += np.conj(ux) * x[:-1, :]
    acc[:, :-1] += uy * x[:, 1:]
    acc[:, 1:] += np.conj(uy) * x[:, :-1]
    return acc


def stencil_apply(psi, ux, uy, diag, inv_h2):
    psi = np.asarray(psi, dtype=np.complex128)
    return diag * psi - inv_h2 * _hop(psi, ux, uy)


def cn_jacobi_solve(b, x0, ux, uy, diag, inv_h2, tau, tol, max_sweeps):
    """Solve (1 + i tau H) x = b by Jacobi sweeps; returns (x, sweeps, update)."""
    b = np.asarray(b, dtype=np.complex128)
    x = np.array(x0, dtype=np.complex128, copy=True)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(x), 0, 0.0
    denom = 1.0 + 1j * tau * diag
    coef = 1j * tau * inv_h2
    sweep = 0
    upd = 0.0
    while sweep < max_sweeps:
        sweep += 1
        y = (b + coef * _hop(x, ux, uy)) / denom
        upd = np.linalg.norm(y - x) / bnorm
        x = y
        if upd <= tol:
            break
    return x, sweep, upd


def tql2(d, e, z, max_iter=60):
    """Implicit QL; see the compiled version for the storage conventions."""
    n = d.shape[0]
    if n == 0:
        return
    eps = np.finfo(float).eps
    e[n - 1] = 0.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise ArithmeticError("QL iteration did not converge")
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + r if g >= 0 else g - r)
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
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
                zi = z[i].copy()
                z[i] = c * zi - s * z[i + 1]
                z[i + 1] = s * zi + c * z[i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
