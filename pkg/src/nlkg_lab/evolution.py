"""Time integration of u_tt = u_xx - u + f(u), conservation laws and soliton trains.

Schemes
-------
``strang_split``
    Half kick by f(u), exact linear Klein-Gordon flow, half kick. The linear
    flow is exact in the eigenbasis of 1 - Δ (Fourier modes on periodic
    spectral grids, a dense symmetric eigendecomposition otherwise), so the
    scheme is symmetric, symplectic and second order.
``leapfrog``
    Velocity Verlet on the full right-hand side.

Negative steps integrate backward in time; both schemes are exactly
time-reversible up to round-off.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .bound_states import BoundState, Nonlinearity
from .errors import BlowUpError, ConfigurationError, DomainError
from .fields import Grid1D, ScalarField, StateVector, derivative, gradient_sq, inner_l2

SCHEMES = ("strang_split", "leapfrog")


@dataclass(frozen=True)
class TrainEntry:
    state: BoundState
    beta: float
    offset: float = 0.0


@dataclass(frozen=True)
class TrainSpec:
    """N boosted bound states q_n(γ_n(x - β_n t - offset_n)) sharing one nonlinearity."""

    entries: tuple
    nonlinearity: Nonlinearity

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ConfigurationError("a soliton train needs at least one entry")
        for e in self.entries:
            if abs(e.beta) >= 1.0:
                raise DomainError(f"|beta| must be < 1, got {e.beta}")
        betas = [e.beta for e in self.entries]
        if len(set(betas)) != len(betas):
            raise ConfigurationError("soliton velocities must be pairwise distinct")

    @property
    def betas(self) -> np.ndarray:
        return np.array([e.beta for e in self.entries])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([e.offset for e in self.entries])

    @property
    def delta(self) -> float:
        """One tenth of the smallest velocity gap (infinite for a single soliton)."""
        if len(self.entries) < 2:
            return np.inf
        return 0.1 * min(abs(a - b) for a, b in combinations(self.betas, 2))


def single_soliton_arrays(entry: TrainEntry, grid: Grid1D, t: float = 0.0):
    """(r, -β r_x) for one boosted soliton with center β t + offset."""
    g = 1.0 / np.sqrt(1.0 - entry.beta**2)
    y = g * (grid.x - entry.beta * t - entry.offset)
    src = entry.state.grid
    r = src.interpolate(entry.state.profile.values, y)
    rx = g * src.interpolate(entry.state.profile.values, y, derivative=1)
    return r, -entry.beta * rx


def _exit_warning(spec: TrainSpec, grid: Grid1D, t: float, margin: float = 10.0):
    for e in spec.entries:
        c = e.beta * t + e.offset
        if abs(c) > grid.half_width - margin:
            warnings.warn(f"soliton center {c:.3g} is within {margin} of the domain edge", RuntimeWarning)


def soliton_train_state(spec: TrainSpec, t: float, grid: Grid1D) -> StateVector:
    _exit_warning(spec, grid, t)
    u = np.zeros(grid.n_points)
    ut = np.zeros(grid.n_points)
    for e in spec.entries:
        r, s = single_soliton_arrays(e, grid, t)
        u += r
        ut += s
    return StateVector.from_arrays(grid, u, ut)


def energy(U: StateVector, nl: Nonlinearity) -> float:
    """E = 1/2 ∫ (u_t^2 + u_x^2 + u^2 - 2F(u))."""
    u, ut = U.first, U.second
    one = ScalarField(U.grid, np.ones(U.grid.n_points))
    Fu = ScalarField(U.grid, nl.F(u.values))
    return 0.5 * (inner_l2(ut, ut) + gradient_sq(u) + inner_l2(u, u)) - inner_l2(Fu, one)


def momentum(U: StateVector) -> float:
    """P = 1/2 ∫ u_t u_x."""
    return 0.5 * inner_l2(U.second, derivative(U.first))


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_begin: float = 0.0
    t_end: float = 1.0
    scheme: str = "strang_split"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if not np.isfinite(self.dt) or self.dt == 0:
            raise ConfigurationError("dt must be finite and nonzero")

    def signed_dt(self) -> float:
        return np.sign(self.t_end - self.t_begin or 1.0) * abs(self.dt)

    def check_cfl(self, grid: Grid1D):
        if abs(self.dt) > 0.5 * grid.spacing:
            raise ConfigurationError(f"|dt| = {abs(self.dt)} exceeds 0.5 * spacing = {0.5 * grid.spacing}")


@functools.lru_cache(maxsize=4)
def _eigenbasis(key):
    half_width, n, boundary, stencil = key
    grid = Grid1D(half_width, n, boundary, stencil)
    lam, Q = sla.eigh(-grid.laplacian_matrix())
    lam = np.maximum(lam, 0.0)
    Q = np.ascontiguousarray(Q)
    return np.sqrt(1.0 + lam), Q, np.ascontiguousarray(Q.T)


class Integrator:
    """Stepper for the nonlinear Klein-Gordon system on a fixed grid and step."""

    def __init__(self, grid: Grid1D, nl: Nonlinearity, dt: float, scheme: str = "strang_split"):
        EvolutionConfig(dt=dt, scheme=scheme).check_cfl(grid)
        self.grid, self.nl, self.dt, self.scheme = grid, nl, float(dt), scheme
        n = grid.n_points
        if scheme == "strang_split":
            if grid.periodic and grid.stencil == "spectral":
                k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.spacing)
                om = np.sqrt(1.0 + k * k)
                self._fwd = sfft.rfft
                self._inv = functools.partial(sfft.irfft, n=n)
            else:
                om, Q, Qt = _eigenbasis(grid._key())
                self._fwd = Qt.__matmul__
                self._inv = Q.__matmul__
            self._c = np.cos(om * dt)
            self._s_over = np.sin(om * dt) / om
            self._s_times = om * np.sin(om * dt)

    def advance(self, u: np.ndarray, v: np.ndarray, nsteps: int):
        """Advance arrays (u, u_t) by ``nsteps`` steps of size dt."""
        if nsteps <= 0:
            return u.copy(), v.copy()
        if self.scheme == "strang_split":
            return self._strang(u, v, nsteps)
        return self._verlet(u, v, nsteps)

    def _strang(self, u, v, nsteps):
        f, dt = self.nl.f, self.dt
        fwd, inv = self._fwd, self._inv
        c, so, st = self._c, self._s_over, self._s_times
        uh = fwd(u)
        vh = fwd(v) + 0.5 * dt * fwd(f(u))
        for i in range(nsteps):
            uh, vh = c * uh + so * vh, c * vh - st * uh
            u = inv(uh)
            vh = vh + (dt if i < nsteps - 1 else 0.5 * dt) * fwd(f(u))
        return u, inv(vh)

    def _verlet(self, u, v, nsteps):
        f, dt, lap = self.nl.f, self.dt, self.grid.apply_laplacian

        def acc(a):
            return lap(a) - a + f(a)

        a = acc(u)
        for _ in range(nsteps):
            v = v + 0.5 * dt * a
            u = u + dt * v
            a = acc(u)
            v = v + 0.5 * dt * a
        return u, v


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    energy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    momentum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    norm: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _sample_plan(t_begin, t_end, dt, sample_every):
    total = int(round(abs(t_end - t_begin) / abs(dt)))
    if not np.isclose(total * abs(dt), abs(t_end - t_begin), rtol=1e-9, atol=1e-12):
        raise ConfigurationError("the time span is not an integer number of steps")
    stride = total if sample_every is None else max(1, int(round(abs(sample_every) / abs(dt))))
    marks = list(range(0, total, stride)) + [total]
    return total, marks


def evolve(U0: StateVector, cfg: EvolutionConfig, nl: Nonlinearity, sample_every: float | None = None,
           diagnostics: bool = True, blowup_threshold: float = 1e6) -> Trajectory:
    """Integrate from cfg.t_begin to cfg.t_end, recording states every ``sample_every`` time units."""
    grid = U0.grid
    cfg.check_cfl(grid)
    dt = cfg.signed_dt()
    integ = Integrator(grid, nl, dt, cfg.scheme)
    total, marks = _sample_plan(cfg.t_begin, cfg.t_end, dt, sample_every)
    u, v = U0.first.values.copy(), U0.second.values.copy()
    times, states = [], []
    done = 0
    for m in marks:
        u, v = integ.advance(u, v, m - done)
        done = m
        t = cfg.t_begin + m * dt
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise BlowUpError("non-finite values in the evolution", last_time=times[-1] if times else cfg.t_begin)
        U = StateVector.from_arrays(grid, u, v)
        nrm = np.sqrt(inner_l2(U.first, U.first) + gradient_sq(U.first) + inner_l2(U.second, U.second))
        if nrm > blowup_threshold:
            raise BlowUpError(f"energy norm {nrm:.3e} exceeds {blowup_threshold:g}",
                              last_time=times[-1] if times else cfg.t_begin)
        times.append(t)
        states.append(U)
    traj = Trajectory(np.array(times), states)
    if diagnostics:
        traj.energy = np.array([energy(s, nl) for s in states])
        traj.momentum = np.array([momentum(s) for s in states])
        traj.norm = np.array([np.sqrt(inner_l2(s.first, s.first) + gradient_sq(s.first)
                                      + inner_l2(s.second, s.second)) for s in states])
    return traj


def linearized_evolve(V0: StateVector, bundle, cfg: EvolutionConfig, sample_every: float | None = None) -> Trajectory:
    """Integrate ∂_t V = JH V in the comoving frame by the Crank-Nicolson rule.

    ``bundle`` supplies the boost and potential through its assembled JH.
    """
    grid = V0.grid
    dt = cfg.signed_dt()
    JH = bundle.JH().matrix
    m = JH.shape[0]
    eye = np.eye(m)
    lu = sla.lu_factor(eye - 0.5 * dt * JH)
    rhs_op = eye + 0.5 * dt * JH
    total, marks = _sample_plan(cfg.t_begin, cfg.t_end, dt, sample_every)
    x = V0.stacked()
    times, states, done = [], [], 0
    for mk in marks:
        for _ in range(mk - done):
            x = sla.lu_solve(lu, rhs_op @ x)
        done = mk
        times.append(cfg.t_begin + mk * dt)
        states.append(StateVector.from_stacked(grid, x.copy()))
    return Trajectory(np.array(times), states)


def log_slope(times, values) -> float:
    """Least-squares slope of log|values| against time."""
    return float(np.polyfit(np.asarray(times), np.log(np.abs(np.asarray(values))), 1)[0])
