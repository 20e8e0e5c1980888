"""Uniform 1D grids, scalar and state fields, quadrature and discrete derivatives.

Two boundary conventions are supported. ``dirichlet_zero`` treats values outside
``[-half_width, half_width]`` as zero; ``periodic`` identifies x and x + n_points*spacing.

The default ``spectral`` stencil uses the sinc (Whittaker cardinal) derivative
matrices for ``dirichlet_zero`` and Fourier derivative matrices for ``periodic``.
Both converge exponentially on the analytic, exponentially decaying profiles
the lab works with. ``fd2`` and ``fd4`` give the classical central differences.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError

BOUNDARIES = ("dirichlet_zero", "periodic")
STENCILS = ("spectral", "fd2", "fd4")


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh x_i = -half_width + i*spacing, i = 0..n_points-1."""

    half_width: float = 40.0
    n_points: int = 2048
    boundary: str = "dirichlet_zero"
    stencil: str = "spectral"

    def __post_init__(self):
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise ConfigurationError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_points) != self.n_points or self.n_points < 16:
            raise ConfigurationError(f"n_points must be an integer >= 16, got {self.n_points}")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary {self.boundary!r}")
        if self.stencil not in STENCILS:
            raise ConfigurationError(f"unknown stencil {self.stencil!r}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def period(self) -> float:
        """Length of the periodic cell (only meaningful for periodic grids)."""
        return self.n_points * self.spacing

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n_points)

    def _key(self):
        return (float(self.half_width), int(self.n_points), self.boundary, self.stencil)

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights (uniform for periodic grids)."""
        w = np.full(self.n_points, self.spacing)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.spacing
        return w

    # dense operators ---------------------------------------------------------
    def derivative_matrix(self) -> np.ndarray:
        """Dense first-derivative matrix (antisymmetric)."""
        return _dense_operators(self._key())[0]

    def laplacian_matrix(self) -> np.ndarray:
        """Dense second-derivative matrix (symmetric)."""
        return _dense_operators(self._key())[1]

    # fast application --------------------------------------------------------
    def apply_derivative(self, values: np.ndarray) -> np.ndarray:
        return _apply(self, values, order=1)

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        return _apply(self, values, order=2)

    # resampling ----------------------------------------------------------------
    def interpolate(self, values: np.ndarray, points, derivative: int = 0) -> np.ndarray:
        """Evaluate the grid interpolant of ``values`` (or its first derivative) at ``points``."""
        points = np.asarray(points, dtype=float)
        if derivative not in (0, 1):
            raise ConfigurationError("derivative must be 0 or 1")
        if self.stencil != "spectral":
            spline = CubicSpline(self.x, values, bc_type="periodic" if self.periodic else "natural")
            if self.periodic:
                y = (points + self.half_width) % self.period - self.half_width
                return spline(y, derivative)
            out = spline(points, derivative)
            out[np.abs(points) > self.half_width] = 0.0
            return out
        if self.periodic:
            return _trig_interpolate(self, values, points, derivative)
        return _sinc_interpolate(self, values, points, derivative)

    def translate(self, values: np.ndarray, shift: float) -> np.ndarray:
        """Return samples of g(x) = f(x - shift) where f interpolates ``values``."""
        if shift == 0.0:
            return np.array(values, dtype=float, copy=True)
        if self.stencil != "spectral":
            return self.interpolate(values, self.x - shift)
        n = self.n_points
        m = n if self.periodic else sfft.next_fast_len(2 * n)
        k = 2.0 * np.pi * np.fft.rfftfreq(m, d=self.spacing)
        spec = sfft.rfft(values, n=m) * np.exp(-1j * k * shift)
        return sfft.irfft(spec, n=m)[:n]


@functools.lru_cache(maxsize=6)
def _dense_operators(key):
    half_width, n, boundary, stencil = key
    h = 2.0 * half_width / (n - 1)
    if stencil == "spectral":
        if boundary == "periodic":
            eye = np.eye(n)
            kk = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
            k1 = 1j * kk
            if n % 2 == 0:
                k1[-1] = 0.0
            D = sfft.irfft(k1[:, None] * sfft.rfft(eye, axis=0), n=n, axis=0)
            D2 = sfft.irfft(-(kk**2)[:, None] * sfft.rfft(eye, axis=0), n=n, axis=0)
            D = 0.5 * (D - D.T)
            D2 = 0.5 * (D2 + D2.T)
        else:
            cD, cD2 = _sinc_columns(n, h)
            D = sla.toeplitz(cD, -cD)
            D2 = sla.toeplitz(cD2)
    else:
        D, D2 = (m.toarray() for m in _sparse_fd(n, h, stencil, boundary == "periodic"))
    D.setflags(write=False)
    D2.setflags(write=False)
    return D, D2


def _sinc_columns(n, h):
    k = np.arange(n, dtype=float)
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    cD = np.zeros(n)
    cD[1:] = sign[1:] / (k[1:] * h)
    cD2 = np.empty(n)
    cD2[0] = -np.pi**2 / (3.0 * h * h)
    cD2[1:] = -2.0 * sign[1:] / (k[1:] ** 2 * h * h)
    return cD, cD2


@functools.lru_cache(maxsize=16)
def _sparse_fd(n, h, stencil, periodic):
    if stencil == "fd2":
        c1 = {-1: -0.5, 1: 0.5}
        c2 = {-1: 1.0, 0: -2.0, 1: 1.0}
    else:
        c1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
        c2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}

    def build(coeffs, scale):
        m = sp.lil_matrix((n, n))
        for off, c in coeffs.items():
            for i in range(n):
                j = i + off
                if periodic:
                    m[i, j % n] += c * scale
                elif 0 <= j < n:
                    m[i, j] += c * scale
        return m.tocsr()

    return build(c1, 1.0 / h), build(c2, 1.0 / (h * h))


@functools.lru_cache(maxsize=6)
def _sinc_columns_cached(n, h):
    return _sinc_columns(n, h)


def _apply(grid: Grid1D, values, order):
    values = np.asarray(values, dtype=float)
    n, h = grid.n_points, grid.spacing
    if grid.stencil == "spectral":
        if grid.periodic:
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
            if order == 1:
                sym = 1j * k
                if n % 2 == 0:
                    sym[-1] = 0.0
            else:
                sym = -(k**2)
            return sfft.irfft(sym * sfft.rfft(values), n=n)
        cD, cD2 = _sinc_columns_cached(n, h)
        if order == 1:
            return sla.matmul_toeplitz((cD, -cD), values)
        return sla.matmul_toeplitz(cD2, values)
    D, D2 = _sparse_fd(n, h, grid.stencil, grid.periodic)
    return (D if order == 1 else D2) @ values


def _sinc_interpolate(grid, values, points, derivative, chunk=512):
    h = grid.spacing
    x = grid.x
    flat = points.ravel()
    out = np.empty_like(flat)
    for s in range(0, flat.size, chunk):
        z = (flat[s : s + chunk, None] - x[None, :]) / h
        if derivative == 0:
            kern = np.sinc(z)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.where(z == 0.0, 0.0, (np.cos(np.pi * z) - np.sinc(z)) / z) / h
        out[s : s + chunk] = kern @ values
    return out.reshape(points.shape)


def _trig_interpolate(grid, values, points, derivative, chunk=512):
    n = grid.n_points
    coef = np.fft.rfft(values) / n
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.spacing)
    wts = np.full(k.size, 2.0)
    wts[0] = 1.0
    if n % 2 == 0:
        wts[-1] = 1.0
    flat = points.ravel() - grid.x[0]
    out = np.empty_like(flat)
    for s in range(0, flat.size, chunk):
        ph = np.exp(1j * np.outer(flat[s : s + chunk], k))
        if derivative:
            ph = ph * (1j * k)
        out[s : s + chunk] = np.real(ph @ (wts * coef))
    return out.reshape(points.shape)


def _check_grid(grid: Grid1D, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (grid.n_points,):
        raise ConfigurationError(f"expected {grid.n_points} values, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar function on a grid."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        arr = _check_grid(self.grid, self.values)
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("field values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n_points))

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, fn(grid.x))

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class StateVector:
    """The pair U = (u, u_t)."""

    first: ScalarField
    second: ScalarField

    def __post_init__(self):
        _same_grid(self.first.grid, self.second.grid)

    @property
    def grid(self) -> Grid1D:
        return self.first.grid

    @classmethod
    def zeros(cls, grid):
        return cls(ScalarField.zeros(grid), ScalarField.zeros(grid))

    @classmethod
    def from_arrays(cls, grid, u, ut):
        return cls(ScalarField(grid, u), ScalarField(grid, ut))

    @classmethod
    def from_stacked(cls, grid, arr):
        n = grid.n_points
        return cls.from_arrays(grid, arr[:n], arr[n:])

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.first.values, self.second.values])

    def __add__(self, other):
        return StateVector(self.first + other.first, self.second + other.second)

    def __sub__(self, other):
        return StateVector(self.first - other.first, self.second - other.second)

    def __mul__(self, scalar):
        return StateVector(self.first * scalar, self.second * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return StateVector(-self.first, -self.second)


def _same_grid(g1: Grid1D, g2: Grid1D):
    if g1 != g2:
        raise ConfigurationError("fields live on different grids")


def inner_l2(a: ScalarField, b: ScalarField) -> float:
    """Trapezoid-rule approximation of the integral of a*b."""
    _same_grid(a.grid, b.grid)
    return float(np.sum(a.grid.quadrature_weights() * a.values * b.values))


def inner_pair(U: StateVector, V: StateVector) -> float:
    """<U, V> = (u1, v1) + (u2, v2)."""
    return inner_l2(U.first, V.first) + inner_l2(U.second, V.second)


def laplacian(a: ScalarField) -> ScalarField:
    return ScalarField(a.grid, a.grid.apply_laplacian(a.values))


def derivative(a: ScalarField) -> ScalarField:
    return ScalarField(a.grid, a.grid.apply_derivative(a.values))


def gradient_sq(a: ScalarField) -> float:
    """Discrete Dirichlet form -(Δa, a), the grid analogue of the integral of |a'|^2."""
    return -inner_l2(laplacian(a), a)


def energy_norm_sq(U: StateVector) -> float:
    """||u1||_{H^1}^2 + ||u2||_{L^2}^2."""
    u, ut = U.first, U.second
    return inner_l2(u, u) + gradient_sq(u) + inner_l2(ut, ut)


def energy_gram(grid: Grid1D) -> np.ndarray:
    """Matrix B with U^T B U the energy norm of the stacked vector U (uniform weights)."""
    n = grid.n_points
    B = np.zeros((2 * n, 2 * n))
    B[:n, :n] = grid.spacing * (np.eye(n) - grid.laplacian_matrix())
    B[n:, n:] = grid.spacing * np.eye(n)
    return B


@dataclass(frozen=True)
class EnvelopeWeight:
    """rho(t, x) = sum_n exp(-rate |x - beta_n t - offset_n|)."""

    rate: float
    velocities: tuple
    offsets: tuple = ()

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigurationError("envelope rate must be positive")
        offs = tuple(self.offsets) or (0.0,) * len(self.velocities)
        if len(offs) != len(self.velocities):
            raise ConfigurationError("offsets and velocities differ in length")
        object.__setattr__(self, "velocities", tuple(float(b) for b in self.velocities))
        object.__setattr__(self, "offsets", tuple(float(o) for o in offs))


def envelope_eval(E: EnvelopeWeight, x, t: float):
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for beta, off in zip(E.velocities, E.offsets):
        total = total + np.exp(-E.rate * np.abs(x - beta * t - off))
    return total


def write_snapshot(path, U: StateVector) -> None:
    """Write a field snapshot CSV with header ``x,u,ut`` at full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u", "ut"])
        for row in zip(U.grid.x, U.first.values, U.second.values):
            w.writerow([f"{v:.17g}" for v in row])


def read_snapshot(path, grid: Grid1D) -> StateVector:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.n_points or not np.allclose(data[:, 0], grid.x, rtol=0, atol=1e-12):
        raise ConfigurationError("snapshot does not match the grid")
    return StateVector.from_arrays(grid, data[:, 1], data[:, 2])
