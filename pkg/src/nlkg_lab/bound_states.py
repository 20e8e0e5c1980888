"""Bound-state profiles of -q'' + q - f(q) = 0 and sandbox Schrödinger potentials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, DegenerateSolutionError, DiscretizationError, DomainError
from .fields import Grid1D, ScalarField, _sparse_fd, gradient_sq, inner_l2


@dataclass(frozen=True)
class Nonlinearity:
    """f(u) = |u|^(p-1) u with primitive F(u) = |u|^(p+1)/(p+1)."""

    power: float = 3.0

    def __post_init__(self):
        if not np.isfinite(self.power) or self.power <= 1:
            raise DomainError(f"nonlinearity power must exceed 1, got {self.power}")

    @property
    def p0(self) -> float:
        return min(2.0, self.power)

    def f(self, u):
        p = self.power
        if p == 3.0:
            return u * u * u
        if p == 2.0:
            return np.abs(u) * u
        return np.abs(u) ** (p - 1) * u

    def F(self, u):
        p = self.power
        if p == 3.0:
            u2 = u * u
            return 0.25 * u2 * u2
        return np.abs(u) ** (p + 1) / (p + 1)

    def fprime(self, u):
        p = self.power
        if p == 3.0:
            return 3.0 * u * u
        if p == 2.0:
            return 2.0 * np.abs(u)
        return p * np.abs(u) ** (p - 1)


@dataclass(frozen=True, eq=False)
class BoundState:
    profile: ScalarField
    nonlinearity: Nonlinearity
    residual_norm: float
    iterations: int = 0

    @property
    def grid(self) -> Grid1D:
        return self.profile.grid

    def potential(self, points) -> np.ndarray:
        """f'(q) evaluated at arbitrary points through the grid interpolant of q."""
        q = self.grid.interpolate(self.profile.values, points)
        return self.nonlinearity.fprime(q)


@dataclass(frozen=True)
class SandboxPotential:
    """W(x) = depth * sech^2(width * x); stands in for f'(q) in L = -d^2 + 1 - W."""

    depth: float
    width: float = 1.0
    form: str = "poschl_teller"

    def __post_init__(self):
        if not self.depth > 0 or not self.width > 0:
            raise DomainError("sandbox depth and width must be positive")
        if self.form != "poschl_teller":
            raise DomainError(f"unknown sandbox form {self.form!r}")

    def potential(self, points) -> np.ndarray:
        return self.depth / np.cosh(self.width * np.asarray(points, dtype=float)) ** 2


def elliptic_residual(q: np.ndarray, nl: Nonlinearity, grid: Grid1D) -> np.ndarray:
    return -grid.apply_laplacian(q) + q - nl.f(q)


def _l2(grid, v):
    return float(np.sqrt(np.sum(grid.quadrature_weights() * v * v)))


def ground_state_closed_form(p: float, grid: Grid1D) -> BoundState:
    """Sample q(x) = ((p+1)/2)^(1/(p-1)) sech^(2/(p-1))((p-1)x/2)."""
    nl = Nonlinearity(p)
    a = 0.5 * (p - 1.0)
    q = ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0)) / np.cosh(a * grid.x) ** (1.0 / a)
    res = _l2(grid, elliptic_residual(q, nl, grid))
    return BoundState(ScalarField(grid, q), nl, res, 0)


def _preconditioner(grid: Grid1D):
    _, D2 = _sparse_fd(grid.n_points, grid.spacing, "fd2", grid.periodic)
    lu = spla.splu((sp.identity(grid.n_points, format="csc") - D2).tocsc())
    return spla.LinearOperator((grid.n_points,) * 2, matvec=lu.solve)


def solve_bound_state_newton(
    initial_guess: ScalarField,
    nl: Nonlinearity,
    tol: float = 1e-9,
    max_iters: int = 30,
    max_halvings: int = 6,
) -> BoundState:
    """Damped Newton iteration on -Δq + q - f(q) = 0.

    Linear systems are solved by GMRES preconditioned with the tridiagonal
    second-order operator 1 - Δ. The translation direction q' is deflated by a
    rank-one shift so that the Jacobian stays invertible near the solution.
    """
    grid = initial_guess.grid
    q = np.array(initial_guess.values, dtype=float)
    norm0 = _l2(grid, q)
    if norm0 == 0.0:
        raise DegenerateSolutionError("initial guess is the zero field")
    n = grid.n_points
    M = _preconditioner(grid)
    r = elliptic_residual(q, nl, grid)
    rn = _l2(grid, r)
    for it in range(max_iters + 1):
        if rn <= tol:
            return BoundState(ScalarField(grid, q), nl, rn, it)
        if it == max_iters:
            break
        pot = nl.fprime(q)
        d = grid.apply_derivative(q)
        dn = np.linalg.norm(d)
        d = d / dn if dn > 0 else d

        def matvec(v, pot=pot, d=d):
            return -grid.apply_laplacian(v) + v - pot * v + d * (d @ v)

        J = spla.LinearOperator((n, n), matvec=matvec)
        step, info = spla.gmres(J, -r, M=M, rtol=1e-13, atol=0.1 * tol * np.sqrt(grid.spacing), restart=200, maxiter=20)
        if info < 0:
            raise ConvergenceError("inner GMRES breakdown")
        s = 1.0
        for _ in range(max_halvings + 1):
            trial = q + s * step
            rt = elliptic_residual(trial, nl, grid)
            rtn = _l2(grid, rt)
            if rtn < rn:
                break
            s *= 0.5
        else:
            raise ConvergenceError(f"no residual decrease at iteration {it} (residual {rn:.3e})")
        if _l2(grid, trial) < 0.1 * norm0:
            raise DegenerateSolutionError("Newton iterate collapsed towards the zero solution")
        q, r, rn = trial, rt, rtn
    raise ConvergenceError(f"Newton did not converge in {max_iters} iterations (residual {rn:.3e})")


def action_W(q: ScalarField, nl: Nonlinearity) -> float:
    """W(u) = 1/2 ∫ (|u'|^2 + u^2 - 2F(u))."""
    Fq = ScalarField(q.grid, nl.F(q.values))
    one = ScalarField(q.grid, np.ones(q.grid.n_points))
    return 0.5 * (gradient_sq(q) + inner_l2(q, q) - 2.0 * inner_l2(Fq, one))


def lq_q_pairing(q: ScalarField, nl: Nonlinearity, rtol: float = 1e-6) -> float:
    """(Lq, q) by matrix application and by the identity (1-p)∫|q|^(p+1); returns the latter."""
    from .linear_spectrum import assemble_L

    L = assemble_L(BoundState(q, nl, np.nan), q.grid)
    via_matrix = inner_l2(ScalarField(q.grid, L.matrix @ q.values), q)
    absq = ScalarField(q.grid, np.abs(q.values) ** (nl.power + 1))
    via_identity = (1.0 - nl.power) * inner_l2(absq, ScalarField(q.grid, np.ones(q.grid.n_points)))
    if abs(via_matrix - via_identity) > rtol * abs(via_identity):
        raise DiscretizationError(
            f"(Lq,q) routes disagree: matrix {via_matrix:.12g} vs identity {via_identity:.12g}"
        )
    return via_identity


def decay_rate_fit(q: ScalarField, floor: float = 1e-12) -> float:
    """Exponential decay rate from a log-linear fit of |q| on the outer quarter of its support.

    The support is where |q| exceeds ``floor`` times its maximum, so round-off tails
    do not enter the fit.
    """
    x, v = q.grid.x, np.abs(q.values)
    alive = v > floor * v.max()
    reach = np.max(np.abs(x[alive]))
    sel = alive & (np.abs(x) >= 0.75 * reach)
    if sel.sum() < 4:
        raise DiscretizationError("too few tail points for a decay fit")
    slope, _ = np.polyfit(np.abs(x[sel]), np.log(v[sel]), 1)
    return float(-slope)


def _sandbox_eigs(depth, width, grid, count):
    W = SandboxPotential(depth, width).potential(grid.x)
    A = -grid.laplacian_matrix() + np.diag(1.0 - W)
    return sla.eigh(A, eigvals_only=True, subset_by_index=[0, count - 1])


def sandbox_depth_for_kbar(kbar: int, width: float = 1.0, grid: Grid1D | None = None) -> float:
    """Depth giving exactly ``kbar`` negative eigenvalues with the widest gap around 0.

    A coarse scan brackets the depths with the requested count; a bounded scalar
    search then maximises the distance of the spectrum from zero inside the bracket.
    """
    if kbar < 1:
        raise DomainError("kbar must be at least 1")
    grid = grid or Grid1D(half_width=25.0, n_points=384)

    def gap(depth):
        ev = _sandbox_eigs(depth, width, grid, kbar + 1)
        return int(np.sum(ev < 0)), float(np.min(np.abs(ev)))

    depths = np.arange(0.25, (kbar + 2) ** 2 * width**2 + 1.0, 0.25)
    counts = np.array([gap(d)[0] for d in depths])
    inside = depths[counts == kbar]
    if inside.size == 0:
        raise DomainError(f"no depth with {kbar} negative eigenvalues found")
    lo, hi = inside.min() - 0.25, inside.max() + 0.25
    res = minimize_scalar(
        lambda d: -gap(d)[1] if gap(d)[0] == kbar else 0.0,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-4},
    )
    return float(res.x)
