"""Grids, potentials, damping profiles, cutoffs, and Hermite functions.

Shared geometry and profile machinery for the damped Baouendi-Grushin
laboratory: the torus collocation grid, the degenerate potential V(x),
the damping profiles b(x,y), smooth cutoffs, and the L2-normalized
eigenfunctions of the x-harmonic oscillator -d^2/dx^2 + eta^2 x^2.

All objects are immutable after construction and safe to share across
worker processes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TWO_PI = 2.0 * np.pi

K_MAX_DEFAULT = 32
HERMITE_OVERFLOW_ARG = 40.0


class GridTooCoarse(ValueError):
    """Grid does not resolve the subelliptic scale in strict mode."""


class NonpositiveH(ValueError):
    """Semiclassical parameter outside (0, 1]."""


def next_pow2(m: int) -> int:
    n = 4
    while n < m:
        n *= 2
    return n


@dataclass(frozen=True)
class TorusGrid:
    """Fourier collocation grid on the torus [-pi, pi)^2.

    Points are x_j = -pi + j*(2*pi/n_x), same in y, so spacing * count
    equals 2*pi exactly in each direction.
    """

    n_x: int
    n_y: int

    def __post_init__(self):
        for n in (self.n_x, self.n_y):
            if n < 4 or n % 2 != 0:
                raise ValueError(f"grid size must be even and >= 4, got {n}")

    @property
    def dx(self) -> float:
        return TWO_PI / self.n_x

    @property
    def dy(self) -> float:
        return TWO_PI / self.n_y

    @property
    def x(self) -> np.ndarray:
        return -np.pi + TWO_PI * np.arange(self.n_x) / self.n_x

    @property
    def y(self) -> np.ndarray:
        return -np.pi + TWO_PI * np.arange(self.n_y) / self.n_y

    @property
    def k(self) -> np.ndarray:
        """Integer x-Fourier frequencies in FFT order."""
        return np.fft.fftfreq(self.n_x, d=1.0 / self.n_x)

    @property
    def n(self) -> np.ndarray:
        """Integer y-Fourier frequencies in FFT order."""
        return np.fft.fftfreq(self.n_y, d=1.0 / self.n_y)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @classmethod
    def for_subelliptic_scale(cls, h: float, x_factor: float = 4.0,
                              y_factor: float = 4.0, strict: bool = False,
                              min_x: int = 16, min_y: int = 16) -> "TorusGrid":
        """Resolution policy: n_y = pow2(ceil(y_factor/h^2)), n_x likewise in 1/h.

        The subelliptic frequency band |D_y| <= 2/h^2 must sit under the y
        Nyquist frequency, hence the default y_factor = 4. In strict mode a
        violation of the minimal policy raises GridTooCoarse.
        """
        if not 0.0 < h <= 1.0:
            raise NonpositiveH(f"h must be in (0, 1], got {h}")
        n_x = next_pow2(max(min_x, math.ceil(x_factor / h)))
        n_y = next_pow2(max(min_y, math.ceil(y_factor / h / h)))
        if strict and (n_y < 4.0 / h / h or n_x < 4.0 / h):
            raise GridTooCoarse(f"n_x={n_x}, n_y={n_y} below the 4/h, 4/h^2 policy")
        return cls(n_x, n_y)


def smooth_step(u):
    """C-infinity transition: 0 for u <= 0, 1 for u >= 1, strictly increasing between.

    Built from the standard exponential mollifier f(u) = exp(-1/u).
    """
    u = np.asarray(u, dtype=float)
    un = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        f = np.where(un > 0.0, np.exp(-1.0 / np.maximum(un, 1e-300)), 0.0)
        g = np.where(un < 1.0, np.exp(-1.0 / np.maximum(1.0 - un, 1e-300)), 0.0)
    return f / (f + g)


def chi0(eta):
    """Low-frequency cutoff: 1 on |eta| <= 1/2, supported in (-1, 1)."""
    return smooth_step((1.0 - np.abs(eta)) / 0.5)


def chi1(eta):
    """Annular cutoff: 1 on 3/4 <= |eta| <= 3/2, supported in 1/2 <= |eta| <= 2."""
    a = np.abs(eta)
    return smooth_step((a - 0.5) / 0.25) * smooth_step((2.0 - a) / 0.5)


def chi0_wide(eta):
    """Slightly wider low-frequency cutoff with chi0_wide * chi0 = chi0."""
    return chi0(np.asarray(eta) / 2.0)


@dataclass(frozen=True)
class Cutoff:
    """Smooth bump with the support pattern of chi0 or chi1."""

    kind: str  # 'chi0' | 'chi1'

    def __call__(self, eta):
        if self.kind == "chi0":
            return chi0(eta)
        if self.kind == "chi1":
            return chi1(eta)
        raise ValueError(f"unknown cutoff kind {self.kind!r}")


# ----------------------------------------------------------------------------
# potential


@dataclass(frozen=True)
class Potential:
    """Degenerate potential V(x) on the circle with V(0)=V'(0)=0, V''(0)=2.

    `w` is a smooth branch of sqrt(V) on (-pi, pi) (anti-periodic at the
    seam), used by the Grushin seminorms; `taylor` maps an order l to the
    coefficient of x^l in the expansion of V at 0.
    """

    kind: str
    v: Callable[[np.ndarray], np.ndarray]
    dv: Callable[[np.ndarray], np.ndarray]
    w: Callable[[np.ndarray], np.ndarray]
    dw: Callable[[np.ndarray], np.ndarray]
    taylor: Callable[[int], float]

    @classmethod
    def canonical(cls) -> "Potential":
        """V(x) = 4 sin^2(x/2) = 2 - 2 cos x, the reference choice."""

        def taylor(l: int) -> float:
            # 2 - 2cos x = sum_{m>=1} 2 (-1)^(m+1) x^(2m) / (2m)!
            if l < 2 or l % 2 == 1:
                return 0.0
            m = l // 2
            return 2.0 * (-1.0) ** (m + 1) / math.factorial(l)

        return cls(
            kind="canonical",
            v=lambda x: 4.0 * np.sin(np.asarray(x) / 2.0) ** 2,
            dv=lambda x: 2.0 * np.sin(np.asarray(x)),
            w=lambda x: 2.0 * np.sin(np.asarray(x) / 2.0),
            dw=lambda x: np.cos(np.asarray(x) / 2.0),
            taylor=taylor,
        )

    @classmethod
    def constant(cls, value: float = 1.0) -> "Potential":
        """Constant-V test hook; turns the Grushin operator into a flat one."""
        return cls(
            kind=f"constant:{value!r}",
            v=lambda x: np.full_like(np.asarray(x, dtype=float), value),
            dv=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            w=lambda x: np.full_like(np.asarray(x, dtype=float), math.sqrt(value)),
            dw=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            taylor=lambda l: 0.0,
        )

    @classmethod
    def from_callable(cls, v, dv, name="custom", n_taylor_fd=8) -> "Potential":
        """Wrap a user potential; w = sign(x) sqrt(V) patched near 0, Taylor by FD."""

        def w(x):
            x = np.asarray(x, dtype=float)
            out = np.sign(x) * np.sqrt(np.maximum(v(x), 0.0))
            small = np.abs(x) < 1e-6
            if np.any(small):
                out = np.where(small, x, out)  # V''(0)=2 forces W ~ x
            return out

        def dw(x):
            x = np.asarray(x, dtype=float)
            d = 1e-5
            return (w(x + d) - w(x - d)) / (2 * d)

        def taylor(l: int) -> float:
            # central finite differences of order-adaptive width at 0
            d = 0.3 ** (1.0 + l / 8.0)
            js = np.arange(-n_taylor_fd, n_taylor_fd + 1)
            A = np.vander(js * d, 2 * n_taylor_fd + 1, increasing=True).T
            b = np.zeros(2 * n_taylor_fd + 1)
            b[l] = 1.0
            wts = np.linalg.solve(A, b)
            return float(wts @ v(js * d))

        return cls(kind=name, v=v, dv=dv, w=w, dw=dw, taylor=taylor)

    def __call__(self, x):
        return self.v(x)

    def mean(self) -> float:
        """M = (1/2pi) * integral of V over the circle."""
        xs = -np.pi + TWO_PI * np.arange(4096) / 4096
        return float(np.mean(self.v(xs)))

    def validate(self, tol: float = 1e-10, n_sample: int = 2048) -> None:
        """Check V(0)=0, V'(0)=0, V''(0)=2 and positivity away from 0."""
        v0 = float(self.v(0.0))
        dv0 = float(self.dv(0.0))
        d = 1e-4
        ddv0 = float((self.v(d) - 2 * v0 + self.v(-d)) / d**2)
        if abs(v0) > tol or abs(dv0) > tol:
            raise ValueError(f"potential must vanish to first order at 0: V(0)={v0}, V'(0)={dv0}")
        if abs(ddv0 - 2.0) > 1e-6:
            raise ValueError(f"normalization V''(0)=2 violated: got {ddv0}")
        xs = -np.pi + TWO_PI * np.arange(n_sample) / n_sample
        vals = self.v(xs)
        bad = (vals <= 0) & (np.abs(xs) > 1e-9)
        if np.any(bad):
            raise ValueError("potential must be positive away from x=0")


# ----------------------------------------------------------------------------
# damping profiles


def _hermite_completion_poly(t0: float, t1: float, left_vals: np.ndarray,
                             right_vals: np.ndarray) -> np.ndarray:
    """Degree-9 polynomial matching value + 4 derivatives at both endpoints.

    Returns coefficients in increasing-power order.
    """
    M = np.zeros((10, 10))
    rhs = np.zeros(10)
    for k in range(5):
        for p in range(k, 10):
            fac = math.factorial(p) / math.factorial(p - k)
            M[k, p] = fac * t0 ** (p - k)
            M[5 + k, p] = fac * t1 ** (p - k)
        rhs[k] = left_vals[k]
        rhs[5 + k] = right_vals[k]
    return np.linalg.solve(M, rhs)


def _power_law_derivs(nu: float, rho: float) -> np.ndarray:
    out = np.empty(5)
    c = 1.0
    for k in range(5):
        out[k] = c * rho ** (nu - k)
        c *= nu - k
    return out


@dataclass(frozen=True)
class DampingProfile:
    """Nonnegative damping b on the torus.

    kinds:
      'egcc_bump'   radial smooth bump: 0 for r <= r0, 1 for r >= r1
                    (r = |(x,y)| in the fundamental domain)
      'strip'       b(y) = 0 for |y| <= y0, (|y|-y0)^nu on the band
                    [y0, y0+rho], then a C^4 plateau completion c(|y|)
      'finite_type' b(y) = |y-y0|^nu for |y-y0| <= rho, then a C^4
                    plateau completion in the distance to y0
      'constant'    b = plateau everywhere
      'custom'      arbitrary callable f(x, y)

    The plateau completion is a degree-9 polynomial matching the power
    law's value and 4 derivatives at the junction and a flat plateau at
    the far point, so b is W^{4,inf} on the torus by construction.
    """

    kind: str
    nu: float = 0.0
    y0: float = 0.0
    rho: float = 0.0
    plateau: float = 1.0
    r0: float = np.pi / 4
    r1: float = 3 * np.pi / 4
    custom: Optional[Callable] = None
    _poly: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind in ("strip", "finite_type"):
            if self.nu <= 0 or self.rho <= 0:
                raise ValueError("strip/finite_type need nu > 0 and rho > 0")
            start = self.y0 + self.rho if self.kind == "strip" else self.rho
            if start >= np.pi:
                raise ValueError("plateau junction must sit inside the fundamental domain")
            left = _power_law_derivs(self.nu, self.rho)
            right = np.array([self.plateau, 0, 0, 0, 0], dtype=float)
            poly = _hermite_completion_poly(start, np.pi, left, right)
            object.__setattr__(self, "_poly", poly)

    # -- evaluation helpers ----------------------------------------------

    def _band_profile(self, s: np.ndarray, start: float) -> np.ndarray:
        """Power law + plateau completion as a function of distance s >= start-rho."""
        out = np.zeros_like(s)
        band = (s >= start - self.rho) & (s <= start)
        out[band] = (s[band] - (start - self.rho)) ** self.nu
        outer = s > start
        if np.any(outer):
            out[outer] = np.polyval(self._poly[::-1], s[outer])
        return out

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        if self.kind == "constant":
            return np.full_like(y, self.plateau, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.custom(x, y), dtype=float)
        if self.kind == "egcc_bump":
            r = np.hypot(x, y)
            return smooth_step((r - self.r0) / (self.r1 - self.r0))
        if self.kind == "strip":
            s = np.abs(y)
            return self._band_profile(s, self.y0 + self.rho)
        if self.kind == "finite_type":
            # distance to y0 on the circle
            s = np.abs(np.mod(y - self.y0 + np.pi, TWO_PI) - np.pi)
            return self._band_profile(s, self.rho)
        raise ValueError(f"unknown damping kind {self.kind!r}")

    def derivative_y(self, x, y):
        """db/dy; analytic on the band/plateau pieces, FD for custom kinds."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        if self.kind == "constant":
            return np.zeros_like(y, dtype=float)
        if self.kind in ("strip", "finite_type"):
            if self.kind == "strip":
                s = np.abs(y)
                sgn = np.sign(y)
                start = self.y0 + self.rho
            else:
                d = np.mod(y - self.y0 + np.pi, TWO_PI) - np.pi
                s = np.abs(d)
                sgn = np.sign(d)
                start = self.rho
            out = np.zeros_like(s)
            band = (s >= start - self.rho) & (s <= start)
            out[band] = self.nu * (s[band] - (start - self.rho)) ** (self.nu - 1)
            outer = s > start
            if np.any(outer):
                dp = np.polyder(np.poly1d(self._poly[::-1]))
                out[outer] = dp(s[outer])
            return out * sgn
        d = 1e-6
        return (self(x, y + d) - self(x, y - d)) / (2 * d)

    def depends_on_x(self) -> bool:
        return self.kind in ("egcc_bump", "custom")

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom profiles are not serializable")
        return {
            "kind": self.kind, "nu": self.nu, "y0": self.y0, "rho": self.rho,
            "plateau": self.plateau, "r0": self.r0, "r1": self.r1,
        }

    @classmethod
    def from_json(cls, obj) -> "DampingProfile":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(kind=obj["kind"], nu=obj.get("nu", 0.0), y0=obj.get("y0", 0.0),
                   rho=obj.get("rho", 0.0), plateau=obj.get("plateau", 1.0),
                   r0=obj.get("r0", np.pi / 4), r1=obj.get("r1", 3 * np.pi / 4))


def eval_potential(p: Potential, x) -> float:
    """V(x); total on [-pi, pi)."""
    return p.v(x)


def eval_damping(d: DampingProfile, x, y):
    """b(x, y) >= 0 per profile kind; strip/finite_type ignore x."""
    return d(x, y)


# ----------------------------------------------------------------------------
# Hermite functions


def hermite_functions(k_max: int, xi: np.ndarray) -> np.ndarray:
    """phi_k(xi), k = 0..k_max, for the unit oscillator -d^2 + xi^2.

    L2(R)-normalized, evaluated by the stable three-term recurrence
    phi_{k+1} = sqrt(2/(k+1)) xi phi_k - sqrt(k/(k+1)) phi_{k-1}.
    Entries with |xi| > HERMITE_OVERFLOW_ARG are clamped to 0 (the true
    values are below 1e-300).
    """
    xi = np.asarray(xi, dtype=float)
    guard = np.abs(xi) > HERMITE_OVERFLOW_ARG
    xs = np.where(guard, 0.0, xi)
    out = np.zeros((k_max + 1,) + xs.shape)
    out[0] = np.pi ** (-0.25) * np.exp(-xs * xs / 2.0)
    if k_max >= 1:
        out[1] = np.sqrt(2.0) * xs * out[0]
    for k in range(1, k_max):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * xs * out[k] - np.sqrt(k / (k + 1.0)) * out[k - 1]
    if np.any(guard):
        out[:, guard] = 0.0
    return out


def hermite_function(k: int, eta: float, x) -> np.ndarray:
    """L2(R)-normalized k-th eigenfunction of -d^2/dx^2 + eta^2 x^2.

    Eigenvalue (2k+1)*eta for eta > 0. Computed in the scaled variable
    x*sqrt(eta), so the recurrence never sees eta-dependent overflow.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if k > K_MAX_DEFAULT:
        raise ValueError(f"k={k} exceeds K_MAX_DEFAULT={K_MAX_DEFAULT}")
    x = np.asarray(x, dtype=float)
    xi = np.sqrt(eta) * x
    return eta**0.25 * hermite_functions(k, xi)[k]
