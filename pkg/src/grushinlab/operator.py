"""Discretized damped Baouendi-Grushin operators and Grushin seminorms.

The operator P = -h^2(d_xx + V(x) d_yy) + i h b - zeta acts on fields
sampled on a TorusGrid. Derivatives are Fourier-exact in y always; in x
they are Fourier-exact ('spectral') or 8th-order finite differences
('fd8'), per the discretization tag. The assembled sparse matrix lives
in the mixed basis (Fourier in y) x (physical in x), where the vertical
derivative is diagonal and the damping is a per-x circulant in the
y-frequency index; the matrix-free apply agrees with it to roundoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import (TWO_PI, DampingProfile, GridTooCoarse, NonpositiveH,
                   Potential, TorusGrid)

FD8_WEIGHTS = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72,
                        8 / 5, -1 / 5, 8 / 315, -1 / 560])
FD8_OFFSETS = np.arange(-4, 5)


class GridMismatch(ValueError):
    """Field and operator grids differ."""


@dataclass
class GrushinField:
    """Complex field sampled on a TorusGrid, values[i, j] = u(x_i, y_j)."""

    grid: TorusGrid
    values: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_x, self.grid.n_y):
            raise ValueError(f"field shape {self.values.shape} does not match grid "
                             f"({self.grid.n_x}, {self.grid.n_y})")

    def norm(self) -> float:
        """Discrete L2 norm (trapezoid rule, exact for band-limited fields)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx * self.grid.dy))

    def normalized(self) -> "GrushinField":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero field")
        return GrushinField(self.grid, self.values / n, self.h)

    def inner(self, other: "GrushinField") -> complex:
        if other.grid != self.grid:
            raise GridMismatch("fields on different grids")
        return complex(np.vdot(other.values, self.values) * self.grid.dx * self.grid.dy)


def random_field(grid: TorusGrid, seed=0, band_limit: Optional[float] = None,
                 h: float = 1.0) -> GrushinField:
    """Random band-limited field, unit norm. band_limit caps |k|/Nyquist."""
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.n_x, grid.n_y)) + 1j * rng.standard_normal((grid.n_x, grid.n_y))
    if band_limit is not None:
        fk = np.fft.fft2(vals)
        mask = ((np.abs(grid.k[:, None]) <= band_limit * grid.n_x / 2)
                & (np.abs(grid.n[None, :]) <= band_limit * grid.n_y / 2))
        fk *= mask
        vals = np.fft.ifft2(fk)
    f = GrushinField(grid, vals, h)
    return f.normalized()


# ----------------------------------------------------------------------------
# operator


@dataclass
class SemiclassicalOperator:
    """A = S + i*h*B - zeta with S = -h^2(d_xx + V d_yy) Hermitian, B = mult by b."""

    h: float
    zeta: complex
    grid: TorusGrid
    potential: Potential
    damping: DampingProfile
    discretization: str = "spectral"  # x-derivative realization: 'spectral' | 'fd8'
    _vx: np.ndarray = field(default=None, repr=False)
    _b: np.ndarray = field(default=None, repr=False)
    _matrix: sp.csc_matrix = field(default=None, repr=False)

    def __post_init__(self):
        if self.discretization not in ("spectral", "fd8"):
            raise ValueError(f"unknown discretization {self.discretization!r}")
        self._vx = np.asarray(self.potential.v(self.grid.x), dtype=float)
        self._b = np.asarray(self.damping(self.grid.x[:, None], self.grid.y[None, :]),
                             dtype=float)
        if np.any(self._b < -1e-14):
            raise ValueError("damping must be nonnegative")

    @property
    def damping_values(self) -> np.ndarray:
        return self._b

    @property
    def n(self) -> int:
        return self.grid.size

    # -- matrix-free application ------------------------------------------

    def _d2x(self, u: np.ndarray) -> np.ndarray:
        """Second x-derivative along axis 0 per the discretization tag."""
        if self.discretization == "spectral":
            k = self.grid.k
            return np.fft.ifft(-(k[:, None] ** 2) * np.fft.fft(u, axis=0), axis=0)
        dx = self.grid.dx
        out = np.zeros_like(u)
        for w, o in zip(FD8_WEIGHTS, FD8_OFFSETS):
            out += w * np.roll(u, -o, axis=0)
        return out / dx**2

    def apply_values(self, u: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Apply A (or A^H) to physical-space values of shape (n_x, n_y)."""
        n = self.grid.n
        d2y = np.fft.ifft(-(n[None, :] ** 2) * np.fft.fft(u, axis=1), axis=1)
        h2 = self.h * self.h
        out = -h2 * self._d2x(u) - h2 * self._vx[:, None] * d2y
        if adjoint:
            out += (-1j * self.h) * self._b * u - np.conj(self.zeta) * u
        else:
            out += (1j * self.h) * self._b * u - self.zeta * u
        return out

    def apply(self, u: GrushinField) -> GrushinField:
        if u.grid != self.grid:
            raise GridMismatch("field grid does not match operator grid")
        return GrushinField(self.grid, self.apply_values(u.values), self.h)

    # -- assembled sparse matrix ------------------------------------------

    def _x_block(self) -> sp.csr_matrix:
        nx = self.grid.n_x
        if self.discretization == "fd8":
            rows, cols, vals = [], [], []
            for w, o in zip(FD8_WEIGHTS, FD8_OFFSETS):
                idx = np.arange(nx)
                rows.append(idx)
                cols.append((idx + o) % nx)
                vals.append(np.full(nx, w / self.grid.dx**2))
            D2 = sp.csr_matrix((np.concatenate(vals),
                                (np.concatenate(rows), np.concatenate(cols))), shape=(nx, nx))
            return D2
        F = np.fft.fft(np.eye(nx), axis=0)
        D2 = np.real(np.fft.ifft(-(self.grid.k[:, None] ** 2) * F, axis=0))
        return sp.csr_matrix(0.5 * (D2 + D2.T))

    def matrix(self, damping_band: Optional[int] = None) -> sp.csc_matrix:
        """Sparse matrix in the mixed basis, row index = n_idx * n_x + i_x.

        damping_band truncates the damping circulant to |m| <= band Fourier
        modes in y (used only as a factorization accelerator); None keeps
        every mode, in which case the matrix reproduces apply() to roundoff.
        """
        if damping_band is None and self._matrix is not None:
            return self._matrix
        nx, ny = self.grid.n_x, self.grid.n_y
        N = nx * ny
        h2 = self.h * self.h
        diag = np.repeat(h2 * self.grid.n**2, nx) * np.tile(self._vx, ny) - self.zeta
        A = sp.diags(diag, format="csc")
        A = A + sp.kron(sp.identity(ny), -h2 * self._x_block(), format="csc")
        bhat = np.fft.fft(self._b, axis=1) / ny  # per-x circulant coefficients
        band = ny // 2 if damping_band is None else min(damping_band, ny // 2)
        iN = np.arange(ny)
        ix = np.arange(nx)
        rows, cols, vals = [], [], []
        tol = 1e-16 * np.abs(bhat).max() if np.abs(bhat).max() > 0 else 1.0
        for m in range(-band, band + 1):
            coef = bhat[:, m % ny]
            if np.abs(coef).max() <= tol:
                continue
            r = (iN[:, None] * nx + ix[None, :]).ravel()
            c = (((iN - m) % ny)[:, None] * nx + ix[None, :]).ravel()
            rows.append(r)
            cols.append(c)
            vals.append(np.tile(coef, ny) * (1j * self.h))
        if rows:
            B = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N, N))
            A = A + B
        A = A.tocsc()
        if damping_band is None:
            self._matrix = A
        return A

    def to_mixed(self, u: np.ndarray) -> np.ndarray:
        """Physical (n_x, n_y) values -> mixed-basis vector of length n_x*n_y."""
        return (np.fft.fft(u, axis=1) / self.grid.n_y).T.ravel()

    def from_mixed(self, vec: np.ndarray) -> np.ndarray:
        u = vec.reshape(self.grid.n_y, self.grid.n_x).T
        return np.fft.ifft(u * self.grid.n_y, axis=1)


def assemble(h: float, potential: Potential, damping: DampingProfile,
             grid: Optional[TorusGrid] = None, zeta: complex = 1.0,
             discretization: str = "spectral", strict: bool = False) -> SemiclassicalOperator:
    """Assemble P_{h,b} - zeta on the given grid (policy grid if omitted)."""
    if not 0.0 < h <= 1.0:
        raise NonpositiveH(f"h must be in (0, 1], got {h}")
    if grid is None:
        grid = TorusGrid.for_subelliptic_scale(h, strict=strict)
    elif strict and (grid.n_y < 4.0 / h / h or grid.n_x < 4.0 / h):
        raise GridTooCoarse(f"grid ({grid.n_x}, {grid.n_y}) below the 4/h, 4/h^2 policy at h={h}")
    elif grid.n_y < 4.0 / h / h or grid.n_x < 4.0 / h:
        import warnings
        warnings.warn(f"grid ({grid.n_x}, {grid.n_y}) below the 4/h, 4/h^2 policy at h={h}",
                      stacklevel=2)
    return SemiclassicalOperator(h=h, zeta=zeta, grid=grid, potential=potential,
                                 damping=damping, discretization=discretization)


# ----------------------------------------------------------------------------
# seminorms and a-priori checks


def _dx_spectral(u: np.ndarray, grid: TorusGrid) -> np.ndarray:
    k = grid.k.copy()
    k[grid.n_x // 2] = 0.0  # odd derivative: drop the unpaired Nyquist mode
    return np.fft.ifft(1j * k[:, None] * np.fft.fft(u, axis=0), axis=0)


def _dy_spectral(u: np.ndarray, grid: TorusGrid) -> np.ndarray:
    n = grid.n.copy()
    n[grid.n_y // 2] = 0.0
    return np.fft.ifft(1j * n[None, :] * np.fft.fft(u, axis=1), axis=1)


def grushin_seminorm(u: GrushinField, k: int, h: float = 1.0,
                     potential: Optional[Potential] = None) -> float:
    """Sum over words X_1...X_k, X in {h d_x, h W(x) d_y}, of ||X_1...X_k u||_L2.

    W = sqrt(V) uses the smooth branch of the potential (canonical if not
    given). h = 1 gives the homogeneous H^k_G seminorm.
    """
    if k not in (1, 2):
        raise ValueError("only k in {1, 2} is implemented")
    pot = potential if potential is not None else Potential.canonical()
    grid = u.grid
    wvals = np.asarray(pot.w(grid.x), dtype=float)[:, None]

    def X(which, v):
        if which == 0:
            return h * _dx_spectral(v, grid)
        return h * wvals * _dy_spectral(v, grid)

    total = 0.0
    dxdy = grid.dx * grid.dy
    if k == 1:
        for a in (0, 1):
            total += float(np.sqrt(np.sum(np.abs(X(a, u.values)) ** 2) * dxdy))
        return total
    for a in (0, 1):
        va = X(a, u.values)
        for b in (0, 1):
            total += float(np.sqrt(np.sum(np.abs(X(b, va)) ** 2) * dxdy))
    return total


def apply_grushin_laplacian(u: GrushinField, potential: Optional[Potential] = None) -> GrushinField:
    """Delta_G u = (d_xx + V d_yy) u with spectral derivatives."""
    pot = potential if potential is not None else Potential.canonical()
    grid = u.grid
    vx = np.asarray(pot.v(grid.x), dtype=float)
    d2x = np.fft.ifft(-(grid.k[:, None] ** 2) * np.fft.fft(u.values, axis=0), axis=0)
    d2y = np.fft.ifft(-(grid.n[None, :] ** 2) * np.fft.fft(u.values, axis=1), axis=1)
    return GrushinField(grid, d2x + vx[:, None] * d2y, u.h)


def subelliptic_apriori_check(u: GrushinField, potential: Optional[Potential] = None):
    """Return (|| |D_y| u ||, (||Delta_G u||, ||u||)) for the subelliptic bound.

    The caller checks lhs <= C0 * parts[0] + parts[1] with an empirical C0.
    """
    grid = u.grid
    absn = np.abs(grid.n)
    dyu = np.fft.ifft(absn[None, :] * np.fft.fft(u.values, axis=1), axis=1)
    dxdy = grid.dx * grid.dy
    lhs = float(np.sqrt(np.sum(np.abs(dyu) ** 2) * dxdy))
    dg = apply_grushin_laplacian(u, potential)
    return lhs, (dg.norm(), u.norm())


# ----------------------------------------------------------------------------
# persistence


def save_field(u: GrushinField, path) -> None:
    """Raw little-endian complex64 array plus a JSON sidecar (grid, h)."""
    path = Path(path)
    u.values.astype("<c8").tofile(path)
    sidecar = {"n_x": u.grid.n_x, "n_y": u.grid.n_y, "h": u.h,
               "dtype": "<c8", "layout": "x-major"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def load_field(path) -> GrushinField:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    vals = np.fromfile(path, dtype="<c8").reshape(meta["n_x"], meta["n_y"])
    return GrushinField(TorusGrid(meta["n_x"], meta["n_y"]), vals.astype(complex), meta["h"])


def export_matrix(op: SemiclassicalOperator, path) -> None:
    """Coordinate-triplet text export (Matrix Market) for external validation."""
    from scipy.io import mmwrite
    mmwrite(str(path), op.matrix().tocoo())
