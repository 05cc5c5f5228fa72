"""Lowest eigenpairs of the lattice Hamiltonian.

``lowest_eigenpairs`` is a thick-restart Lanczos iteration with full
(two-pass classical Gram-Schmidt) reorthogonalisation and a seeded start
vector. ``dense_reference`` is an independent oracle for small grids: a
Householder reduction to real tridiagonal form followed by implicit QL,
both implemented here rather than delegated to LAPACK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from magberry import kernels

DEFAULT_SEED = 0x5EED_B3_77
DENSE_CAP = 1600


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual):
        super().__init__(message)
        self.best_residual = best_residual


class DegenerateLevelError(RuntimeError):
    """The requested level is not a simple isolated eigenvalue."""

    def __init__(self, message, gap=None, threshold=None, sample=None):
        super().__init__(message)
        self.gap = gap
        self.threshold = threshold
        self.sample = sample


@dataclass
class EigenPair:
    energy: float
    state: np.ndarray  # shape (nx, ny), normalised with weight h**2
    residual: float  # ||H psi - E psi|| in the weighted norm
    index: int = 0
    tolerance: float = float("nan")  # absolute residual tolerance of the solve


@dataclass(frozen=True)
class SolverConfig:
    k: int = 2
    tol: float = 1e-8  # relative to the Gershgorin spectral scale
    max_iterations: int = 20000  # operator applications
    seed: int = DEFAULT_SEED
    basis_size: int = 64

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.basis_size < 4:
            raise ValueError("basis_size must be >= 4")


def fix_phase(vec):
    """Rotate so the largest-magnitude entry is real and positive.

    Near-ties (within 1e-9 relative) go to the lowest flat index, which keeps
    the choice stable under rounding-level perturbations.
    """
    mag = np.abs(vec.ravel())
    top = mag.max()
    if top == 0:
        return vec
    k = int(np.flatnonzero(mag >= top * (1.0 - 1e-9))[0])
    z = vec.ravel()[k]
    return vec * (np.conj(z) / abs(z))


def _start_vector(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _pairs_from_vectors(H, energies, vectors, tol_abs):
    h = H.grid.h
    out = []
    for i, (e, v) in enumerate(zip(energies, vectors)):
        v = fix_phase(v / np.linalg.norm(v))
        r = H.matvec(v) - e * v
        out.append(
            EigenPair(
                energy=float(e),
                state=(v / h).reshape(H.grid.shape),
                residual=float(np.linalg.norm(r)),
                index=i,
                tolerance=tol_abs,
            )
        )
    return out


def lowest_eigenpairs(H, cfg=SolverConfig(), start=None):
    """The ``cfg.k`` lowest eigenpairs of ``H``, ascending in energy.

    Deterministic for fixed ``(H, cfg, start)``. ``start`` optionally replaces
    the seeded random start vector.
    """
    n = H.size
    k = cfg.k
    if k > n:
        raise ValueError(f"k={k} exceeds the grid dimension {n}")
    scale = H.norm_estimate()
    tol_abs = cfg.tol * scale
    m = min(n, max(cfg.basis_size, 2 * k + 8))
    keep = min(m - 2, k + max(8, (m - k) // 3))

    V = np.zeros((m + 1, n), dtype=np.complex128)
    T = np.zeros((m + 1, m), dtype=np.complex128)
    if start is None:
        V[0] = _start_vector(n, cfg.seed)
    else:
        s = np.asarray(start, dtype=np.complex128).ravel()
        V[0] = s / np.linalg.norm(s)
    rng = np.random.default_rng(cfg.seed + 1)

    j0 = 0
    matvecs = 0
    best = np.inf
    while True:
        for j in range(j0, m):
            w = H.matvec(V[j])
            matvecs += 1
            basis = V[: j + 1]
            c = np.conj(basis @ np.conj(w))
            w -= c @ basis
            c2 = np.conj(basis @ np.conj(w))
            w -= c2 @ basis
            T[: j + 1, j] = c + c2
            beta = np.linalg.norm(w)
            if beta <= 1e-12 * scale or j + 1 >= n:
                # invariant subspace: continue with a fresh orthogonal direction
                T[j + 1, j] = 0.0
                w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                for _ in range(2):
                    w -= np.conj(basis @ np.conj(w)) @ basis
                beta_new = np.linalg.norm(w)
                if beta_new == 0 or j + 1 >= n:
                    V[j + 1] = 0.0
                    m_eff = j + 1
                    break
                V[j + 1] = w / beta_new
            else:
                T[j + 1, j] = beta
                V[j + 1] = w / beta
        else:
            m_eff = m

        Tm = T[:m_eff, :m_eff]
        Tm = 0.5 * (Tm + Tm.conj().T)
        theta, Y = np.linalg.eigh(Tm)
        coupling = abs(T[m_eff, m_eff - 1]) if m_eff < n else 0.0
        est = coupling * np.abs(Y[m_eff - 1, :k])
        if np.all(est <= tol_abs) or m_eff < m:
            X = Y[:, :k].T @ V[:m_eff]
            res = np.array([np.linalg.norm(H.matvec(x) - t * x) for x, t in zip(X, theta[:k])])
            matvecs += k
            best = min(best, float(res.max()))
            if np.all(res <= tol_abs):
                return _pairs_from_vectors(H, theta[:k], X, tol_abs)
        else:
            best = min(best, float(est.max()))
        if matvecs >= cfg.max_iterations:
            raise ConvergenceError(
                f"Lanczos did not reach residual {tol_abs:.3g} within "
                f"{cfg.max_iterations} operator applications (best {best:.3g})",
                best_residual=best,
            )
        # thick restart: keep the lowest Ritz vectors plus the residual direction
        l = min(keep, m_eff - 1)
        Vk = Y[:, :l].T @ V[:m_eff]
        resid = V[m_eff].copy()
        V[:] = 0.0
        V[:l] = Vk
        V[l] = resid
        T_last = T[m_eff, m_eff - 1]
        T[:] = 0.0
        T[np.arange(l), np.arange(l)] = theta[:l]
        T[l, :l] = T_last * Y[m_eff - 1, :l]
        j0 = l


# -- dense oracle -------------------------------------------------------------


def householder_tridiagonal(A):
    """Reduce a Hermitian matrix to real symmetric tridiagonal form.

    Returns ``(d, e, Q)`` with ``A = Q T Q^H`` where ``T`` has diagonal ``d``
    and real sub/super-diagonal ``e``.
    """
    A = np.array(A, dtype=np.complex128, copy=True)
    n = A.shape[0]
    Q = np.eye(n, dtype=np.complex128)
    left = np.empty((n, 2), dtype=np.complex128)
    right = np.empty((2, n), dtype=np.complex128)
    for k in range(n - 2):
        x = A[k + 1 :, k]
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0 or np.linalg.norm(x[1:]) == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        alpha = -phase * xnorm
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        sub = A[k + 1 :, k + 1 :]
        p = sub @ v
        w = p - np.vdot(v, p).real * v
        # two-sided reflector as one rank-2 update
        m = n - k - 1
        left[:m, 0] = v
        left[:m, 1] = w
        right[0, :m] = np.conj(w)
        right[1, :m] = np.conj(v)
        sub -= 2.0 * (left[:m] @ right[:, :m])
        A[k + 1, k] = alpha
        A[k + 2 :, k] = 0.0
        A[k, k + 1] = np.conj(alpha)
        A[k, k + 2 :] = 0.0
        Qs = Q[:, k + 1 :]
        Qs -= np.outer(Qs @ (2.0 * v), np.conj(v))
    d = np.real(np.diag(A)).copy()
    off = np.diag(A, -1).copy()
    # diagonal unitary making the off-diagonal real and non-negative
    phases = np.ones(n, dtype=np.complex128)
    e = np.zeros(n)
    for i in range(n - 1):
        mag = abs(off[i])
        e[i] = mag
        phases[i + 1] = phases[i] * (off[i] / mag if mag > 0 else 1.0)
    return d, e, Q * phases[None, :]


def hermitian_eigh(A):
    """All eigenpairs of a Hermitian matrix, ascending; vectors are columns."""
    d, e, Q = householder_tridiagonal(A)
    Z = np.eye(d.size)
    kernels.tql2(d, e, Z)
    order = np.argsort(d, kind="stable")
    vecs = Q @ Z[order].T
    return d[order], vecs


def dense_reference(H):
    """Full spectrum of ``H`` by dense diagonalisation (grids of <= 1600 points)."""
    if H.size > DENSE_CAP:
        raise ValueError(f"dense oracle is capped at {DENSE_CAP} grid points, got {H.size}")
    evals, vecs = hermitian_eigh(H.to_dense())
    return _pairs_from_vectors(H, evals, vecs.T, tol_abs=float("nan"))


def gap_check(pairs, threshold=None, level=0):
    """Distance from level ``level`` to its nearest neighbour in ``pairs``.

    ``threshold`` defaults to ten times the solver's absolute residual
    tolerance; a smaller gap raises :class:`DegenerateLevelError`.
    """
    if len(pairs) < level + 2:
        raise ValueError(f"gap check of level {level} needs at least {level + 2} pairs")
    energies = [p.energy for p in pairs]
    if any(b < a for a, b in zip(energies, energies[1:])):
        raise ValueError("pairs must be sorted by ascending energy")
    gap = energies[level + 1] - energies[level]
    if level > 0:
        gap = min(gap, energies[level] - energies[level - 1])
    if threshold is None:
        tol = pairs[level].tolerance
        threshold = 10.0 * tol if np.isfinite(tol) else 0.0
    if gap < threshold:
        raise DegenerateLevelError(
            f"degenerate or near-degenerate level {level}: gap {gap:.3g} < {threshold:.3g}",
            gap=gap,
            threshold=threshold,
        )
    return gap
