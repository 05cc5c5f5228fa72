"""Lattice magnetic Schrodinger operator H(a) = H0 + V(r - a).

Units are the rational ones: |e| = hbar = c = 2m = 1, so the flux quantum is
2*pi and a flux density ``xi`` (flux quanta per unit area, charge sign
included) gives an effective field ``B = 2*pi*xi``.

The free part is discretised with the Peierls substitution on a square grid
centred at the origin. The vector potential is the circular gauge
``A = B/2 * (-y, x)``; the factor multiplying the neighbour value
``psi(r + h e)`` is ``exp(-i theta)`` with ``theta`` the line integral of
``A`` from ``r`` to ``r + h e``. Every plaquette then carries exactly the
flux ``B h**2`` and the lattice operator commutes with the magnetic
translations of :mod:`magberry.mtrans`. Dirichlet boundary conditions
(``psi = 0`` outside the box) are used throughout.

States are complex arrays of shape ``(nx, ny)``; index ``i`` runs along
``x`` and ``j`` along ``y``. Inner products carry the quadrature weight
``h**2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from magberry import kernels

FLUX_QUANTUM = 2.0 * math.pi
COMMENSURATE_TOL = 1e-12
DEFAULT_CONTAINMENT_FACTOR = 6.0


class ContainmentError(ValueError):
    """Well positions come too close to the Dirichlet boundary."""

    def __init__(self, message, margin=None, required=None):
        super().__init__(message)
        self.margin = margin
        self.required = required


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("grid point counts must be integers")
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"grid spacing must be positive and finite, got {self.h}")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def x(self):
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.h

    @property
    def y(self):
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.h

    @property
    def half_widths(self):
        return (self.nx * self.h / 2.0, self.ny * self.h / 2.0)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


@dataclass(frozen=True)
class FluxDensity:
    xi: float

    def __post_init__(self):
        if not math.isfinite(self.xi):
            raise ValueError("flux density must be finite")

    @property
    def is_zero(self):
        return self.xi == 0.0

    @property
    def b_eff(self):
        return FLUX_QUANTUM * self.xi

    @property
    def cyclotron_frequency(self):
        # qB/m with m = 1/2
        return 4.0 * math.pi * abs(self.xi)

    @property
    def magnetic_length(self):
        if self.is_zero:
            return math.inf
        return 1.0 / math.sqrt(FLUX_QUANTUM * abs(self.xi))

    def landau_level(self, n=0):
        return FLUX_QUANTUM * abs(self.xi) * (2 * n + 1)


# -- potentials ---------------------------------------------------------------


def _as_center(center):
    c = tuple(float(v) for v in center)
    if len(c) != 2 or not all(math.isfinite(v) for v in c):
        raise ValueError(f"well center must be two finite numbers, got {center!r}")
    return c


@dataclass(frozen=True)
class GaussianWell:
    depth: float
    sigma: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.depth > 0 or not self.sigma > 0:
            raise ValueError("GaussianWell needs depth > 0 and sigma > 0")
        object.__setattr__(self, "center", _as_center(self.center))

    @property
    def width(self):
        return self.sigma

    def value(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return -self.depth * np.exp(-(dx * dx + dy * dy) / (2.0 * self.sigma**2))


@dataclass(frozen=True)
class CircularWell:
    depth: float
    radius: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.depth > 0 or not self.radius > 0:
            raise ValueError("CircularWell needs depth > 0 and radius > 0")
        object.__setattr__(self, "center", _as_center(self.center))

    @property
    def width(self):
        return self.radius

    def value(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return np.where(dx * dx + dy * dy <= self.radius**2, -self.depth, 0.0)


@dataclass(frozen=True)
class HarmonicWell:
    """Isotropic oscillator of angular frequency ``omega0``.

    With m = 1/2 the potential is ``m/2 omega0**2 r**2 = omega0**2 r**2 / 4``.
    """

    omega0: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("HarmonicWell needs omega0 > 0")
        object.__setattr__(self, "center", _as_center(self.center))

    @property
    def width(self):
        # oscillator length sqrt(hbar / (m omega0))
        return math.sqrt(2.0 / self.omega0)

    def value(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return 0.25 * self.omega0**2 * (dx * dx + dy * dy)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Potential sampled on a rectilinear grid, bilinear in between, zero outside."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    _interp: RegularGridInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (xs.size, ys.size):
            raise ValueError(f"table shape {v.shape} does not match axes ({xs.size}, {ys.size})")
        if xs.size < 2 or ys.size < 2:
            raise ValueError("table needs at least two samples per axis")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise ValueError("table axes must be strictly increasing")
        bad = ~np.isfinite(v)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"non-finite potential sample at x={xs[i]}, y={ys[j]}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "values", v)
        object.__setattr__(
            self,
            "_interp",
            RegularGridInterpolator((xs, ys), v, bounds_error=False, fill_value=0.0),
        )

    @classmethod
    def from_function(cls, grid, func):
        X, Y = grid.mesh()
        return cls(grid.x, grid.y, func(X, Y))

    @classmethod
    def from_csv(cls, path):
        """Read a table with header ``x,y,v`` covering a full rectilinear grid."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y", "v"]:
                raise ValueError(f"{path}: expected header 'x,y,v', got {reader.fieldnames}")
            rows = [(float(r["x"]), float(r["y"]), float(r["v"])) for r in reader]
        if not rows:
            raise ValueError(f"{path}: no samples")
        data = np.array(rows)
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        values = np.full((xs.size, ys.size), np.nan)
        ix = np.searchsorted(xs, data[:, 0])
        iy = np.searchsorted(ys, data[:, 1])
        values[ix, iy] = data[:, 2]
        if data.shape[0] != xs.size * ys.size or np.isnan(values).any():
            raise ValueError(f"{path}: samples do not form a complete rectilinear grid")
        return cls(xs, ys, values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "v"])
            for i, x in enumerate(self.xs):
                for j, y in enumerate(self.ys):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(self.values[i, j]))])

    @property
    def center(self):
        w = np.abs(self.values)
        total = w.sum()
        if total == 0:
            return (0.0, 0.0)
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return (float((w * X).sum() / total), float((w * Y).sum() / total))

    @property
    def width(self):
        w = np.abs(self.values)
        total = w.sum()
        if total == 0:
            return 0.0
        cx, cy = self.center
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return float(np.sqrt((w * ((X - cx) ** 2 + (Y - cy) ** 2)).sum() / total))

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        pts = np.stack(np.broadcast_arrays(x, y), axis=-1)
        return self._interp(pts)


POTENTIAL_KINDS = {
    "gaussian": GaussianWell,
    "circular": CircularWell,
    "harmonic": HarmonicWell,
    "tabulated": Tabulated,
}


def potential_value(spec, r):
    """Value of the potential ``spec`` at the point ``r = (x, y)``."""
    x, y = (float(v) for v in r)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"potential evaluated at non-finite point {r!r}")
    return float(spec.value(x, y))


# -- offsets ------------------------------------------------------------------


@dataclass(frozen=True)
class Offset:
    """Displacement ``a = (a1, a2)`` of the well."""

    a1: float = 0.0
    a2: float = 0.0

    @classmethod
    def from_cells(cls, k1, k2, h):
        return cls(k1 * h, k2 * h)

    @property
    def vector(self):
        return np.array([self.a1, self.a2])

    def commensurate(self, h):
        return all(abs(a / h - round(a / h)) <= COMMENSURATE_TOL for a in (self.a1, self.a2))

    def cells(self, h):
        if not self.commensurate(h):
            raise ValueError(
                f"offset ({self.a1}, {self.a2}) is not an integer multiple of h={h}; "
                "use eigensolver-based transport (berry_phase_resolved) for arbitrary offsets"
            )
        return (int(round(self.a1 / h)), int(round(self.a2 / h)))

    def __add__(self, other):
        return Offset(self.a1 + other.a1, self.a2 + other.a2)

    def __sub__(self, other):
        return Offset(self.a1 - other.a1, self.a2 - other.a2)

    def __neg__(self):
        return Offset(-self.a1, -self.a2)


# -- quadrature ---------------------------------------------------------------


def inner(f, g, h):
    """Weighted inner product ``h**2 * sum(conj(f) * g)``."""
    return h * h * np.vdot(f, g)


def norm(f, h):
    return h * float(np.linalg.norm(f))


def normalize(f, h):
    n = norm(f, h)
    if n == 0:
        raise ValueError("cannot normalize the zero state")
    return f / n


# -- containment --------------------------------------------------------------


def well_center(potential):
    return tuple(getattr(potential, "center", (0.0, 0.0)))


def _well_scale(flux, potential):
    width = 0.0 if potential is None else potential.width
    return width if flux.is_zero else max(flux.magnetic_length, width)


def containment_margin(grid, flux, potential, positions, factor=DEFAULT_CONTAINMENT_FACTOR):
    """Smallest distance from the well centre (over ``positions``) to the box edge.

    Returns ``(margin, required)`` with ``required = factor * max(l_B, width)``.
    Without a field the magnetic length is infinite and only the well width
    enters; ``potential=None`` (free operator) has zero width.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    cx, cy = well_center(potential)
    lx, ly = grid.half_widths
    dx = lx - np.abs(pts[:, 0] + cx)
    dy = ly - np.abs(pts[:, 1] + cy)
    margin = float(min(dx.min(), dy.min()))
    return margin, factor * _well_scale(flux, potential)


def check_containment(grid, flux, potential, positions, factor=DEFAULT_CONTAINMENT_FACTOR):
    margin, required = containment_margin(grid, flux, potential, positions, factor)
    if margin < required:
        raise ContainmentError(
            f"well comes within {margin:.4g} of the boundary; containment needs "
            f">= {required:.4g} (grid {grid.nx}x{grid.ny}, h={grid.h}, xi={flux.xi})",
            margin=margin,
            required=required,
        )
    return margin, required


def minimal_grid(h, flux, potential, positions, factor=DEFAULT_CONTAINMENT_FACTOR, even=True):
    """Smallest square grid at spacing ``h`` satisfying the containment rule."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    cx, cy = well_center(potential)
    reach = float(max(np.abs(pts[:, 0] + cx).max(), np.abs(pts[:, 1] + cy).max()))
    scale = _well_scale(flux, potential)
    n = max(8, math.ceil(2.0 * (reach + factor * scale) / h))
    if even and n % 2:
        n += 1
    return GridSpec(n, n, h)


# -- the operator -------------------------------------------------------------


def link_phases(grid, flux):
    """Line integrals of ``A = B/2 (-y, x)`` along the x- and y-links.

    ``theta_x[i, j]`` belongs to the link ``(i, j) -> (i + 1, j)`` and
    ``theta_y[i, j]`` to ``(i, j) -> (i, j + 1)``. ``A`` is linear, so the
    midpoint value times ``h`` is the exact integral.
    """
    X, Y = grid.mesh()
    half_b = 0.5 * flux.b_eff
    theta_x = -half_b * Y[:-1, :] * grid.h
    theta_y = half_b * X[:, :-1] * grid.h
    return theta_x, theta_y


def plaquette_flux(grid, flux):
    """Counter-clockwise sum of link phases on every elementary plaquette."""
    tx, ty = link_phases(grid, flux)
    return tx[:, :-1] + ty[1:, :] - tx[:, 1:] - ty[:-1, :]


class HamiltonianOperator:
    """Matrix-free H(a) on a :class:`GridSpec`. Build with :func:`build_hamiltonian`."""

    def __init__(self, grid, flux, potential, offset, potential_samples):
        self.grid = grid
        self.flux = flux
        self.potential = potential
        self.offset = offset
        self.theta_x, self.theta_y = link_phases(grid, flux)
        self.ux = np.ascontiguousarray(np.exp(-1j * self.theta_x))
        self.uy = np.ascontiguousarray(np.exp(-1j * self.theta_y))
        self.inv_h2 = 1.0 / grid.h**2
        self.potential_samples = potential_samples
        self.diag = np.ascontiguousarray(4.0 * self.inv_h2 + potential_samples)
        for arr in (self.ux, self.uy, self.diag, self.potential_samples):
            arr.setflags(write=False)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def size(self):
        return self.grid.size

    def apply(self, psi):
        psi = np.asarray(psi)
        if psi.shape != self.grid.shape:
            raise ValueError(f"state shape {psi.shape} does not match grid {self.grid.shape}")
        return kernels.stencil_apply(psi, self.ux, self.uy, self.diag, self.inv_h2)

    def __matmul__(self, psi):
        return self.apply(psi)

    def matvec(self, v):
        """Action on flattened vectors (for Krylov methods)."""
        return self.apply(np.reshape(v, self.grid.shape)).ravel()

    def norm_estimate(self):
        """Gershgorin bound on the spectral radius."""
        return float(np.max(np.abs(self.diag)) + 4.0 * self.inv_h2)

    def to_dense(self):
        nx, ny = self.grid.shape
        n = nx * ny
        idx = np.arange(n).reshape(nx, ny)
        mat = np.zeros((n, n), dtype=np.complex128)
        mat[idx.ravel(), idx.ravel()] = self.diag.ravel()
        a, b = idx[:-1, :].ravel(), idx[1:, :].ravel()
        mat[a, b] = -self.inv_h2 * self.ux.ravel()
        mat[b, a] = -self.inv_h2 * np.conj(self.ux.ravel())
        a, b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        mat[a, b] = -self.inv_h2 * self.uy.ravel()
        mat[b, a] = -self.inv_h2 * np.conj(self.uy.ravel())
        return mat

    def with_offset(self, offset):
        return build_hamiltonian(self.grid, self.flux, self.potential, offset)

    def __repr__(self):
        return (
            f"HamiltonianOperator(grid={self.grid}, xi={self.flux.xi}, "
            f"potential={self.potential!r}, offset=({self.offset.a1}, {self.offset.a2}))"
        )


def sample_potential(grid, potential, offset=Offset()):
    X, Y = grid.mesh()
    return np.asarray(potential.value(X - offset.a1, Y - offset.a2), dtype=float)


def build_hamiltonian(grid, flux, potential=None, offset=None, *,
                      containment_factor=None):
    """Assemble H(a) = H0 + V(r - a).

    ``potential=None`` gives the free Landau operator. With
    ``containment_factor`` set, the well position is checked against the
    boundary and :class:`ContainmentError` is raised on violation.
    """
    offset = Offset() if offset is None else offset
    if potential is None:
        samples = np.zeros(grid.shape)
    else:
        samples = sample_potential(grid, potential, offset)
        bad = ~np.isfinite(samples)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"non-finite potential sample at grid point ({i}, {j}) "
                f"r=({grid.x[i]}, {grid.y[j]})"
            )
        if containment_factor is not None:
            check_containment(grid, flux, potential, [offset.vector], containment_factor)
    return HamiltonianOperator(grid, flux, potential, offset, samples)


def apply(H, psi):
    """H psi; pure and repeatable."""
    return H.apply(psi)
