"""Linearized operators around (boosted) bound states and their eigen-objects.

With q_β(x) = q(γx) the operators are

    L  = -Δ + 1 - f'(q)
    H  = [[-Δ + 1 - f'(q_β), -β∂], [β∂, 1]]
    JH = [[β∂, 1], [Δ - 1 + f'(q_β), β∂]],   J = [[0, 1], [-1, 0]]

and the boosted modes are

    Y_k^±(x) = e^{∓γλ_kβx} (φ_k(γx), -γβφ_k'(γx) ± γλ_kφ_k(γx)),
    Φ⁰_ℓ(x) = (φ⁰_ℓ(γx), -γβ φ⁰_ℓ'(γx)),

with JH Y_k^± = ±(λ_k/γ) Y_k^± and JH Φ⁰_ℓ = 0.

Matrix-level inner products use uniform weights ``spacing``; for localized
fields they coincide with the trapezoid rule of :func:`fields.inner_l2`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .bound_states import BoundState, Nonlinearity, SandboxPotential
from .errors import DomainError, LemmaViolation, NumericalError
from .fields import Grid1D, ScalarField, StateVector

KINDS = ("L_scalar", "Ltilde_scalar", "H_block", "JH_block")


@dataclass(frozen=True)
class BoostFrame:
    beta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.beta) or abs(self.beta) >= 1.0:
            raise DomainError(f"boost velocity must satisfy |beta| < 1, got {self.beta}")

    @property
    def gamma(self) -> float:
        return 1.0 / np.sqrt(1.0 - self.beta**2)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    kind: str
    matrix: np.ndarray
    symmetric: bool
    grid: Grid1D

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


class FieldSource:
    """Wraps a bare profile q (with its nonlinearity) as a potential source f'(q)."""

    def __init__(self, q: ScalarField, nl: Nonlinearity):
        self.q, self.nonlinearity = q, nl

    def potential(self, points):
        return self.nonlinearity.fprime(self.q.grid.interpolate(self.q.values, points))


def as_source(obj, nl: Nonlinearity | None = None):
    if isinstance(obj, (BoundState, SandboxPotential, FieldSource)):
        return obj
    if isinstance(obj, ScalarField):
        if nl is None:
            raise DomainError("a bare profile needs a nonlinearity")
        return FieldSource(obj, nl)
    raise DomainError(f"unsupported potential source {type(obj).__name__}")


def boosted_potential(source, boost: BoostFrame, grid: Grid1D) -> np.ndarray:
    return as_source(source).potential(boost.gamma * grid.x)


def assemble_L(source, grid: Grid1D | None = None, nl: Nonlinearity | None = None) -> OperatorMatrix:
    """L = -Δ + 1 - V with V = f'(q) or a sandbox potential."""
    src = as_source(source, nl)
    grid = grid or src.grid
    A = -np.array(grid.laplacian_matrix())
    A[np.diag_indices_from(A)] += 1.0 - src.potential(grid.x)
    return OperatorMatrix("L_scalar", A, True, grid)


def assemble_Ltilde(source, boost: BoostFrame, grid: Grid1D) -> OperatorMatrix:
    """L̃ = -Δ + 1 - V(γx) - β² DᵀD, so that <HV,V> = (L̃v1,v1) + |βDv1 + v2|² exactly."""
    D = grid.derivative_matrix()
    A = -np.array(grid.laplacian_matrix()) - boost.beta**2 * (D.T @ D)
    A[np.diag_indices_from(A)] += 1.0 - boosted_potential(source, boost, grid)
    return OperatorMatrix("Ltilde_scalar", 0.5 * (A + A.T), True, grid)


def assemble_H(source, boost: BoostFrame, grid: Grid1D) -> OperatorMatrix:
    n = grid.n_points
    D = grid.derivative_matrix()
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -grid.laplacian_matrix()
    M[:n, :n][np.diag_indices(n)] += 1.0 - boosted_potential(source, boost, grid)
    M[:n, n:] = -boost.beta * D
    M[n:, :n] = boost.beta * D
    M[n:, n:][np.diag_indices(n)] = 1.0
    return OperatorMatrix("H_block", M, True, grid)


def assemble_JH(source, boost: BoostFrame, grid: Grid1D) -> OperatorMatrix:
    n = grid.n_points
    D = grid.derivative_matrix()
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = boost.beta * D
    M[:n, n:][np.diag_indices(n)] = 1.0
    M[n:, :n] = grid.laplacian_matrix()
    M[n:, :n][np.diag_indices(n)] += -1.0 + boosted_potential(source, boost, grid)
    M[n:, n:] = boost.beta * D
    return OperatorMatrix("JH_block", M, False, grid)


def apply_J(v: np.ndarray) -> np.ndarray:
    n = v.size // 2
    return np.concatenate([v[n:], -v[:n]])


def quadratic_form_identity_residual(source, boost: BoostFrame, grid: Grid1D, V: np.ndarray) -> float:
    """Relative gap between <HV,V> and (L̃v1,v1) + |β∂v1 + v2|² for a stacked vector V."""
    n = grid.n_points
    H = assemble_H(source, boost, grid).matrix
    Lt = assemble_Ltilde(source, boost, grid).matrix
    v1, v2 = V[:n], V[n:]
    lhs = V @ H @ V
    w = boost.beta * (grid.derivative_matrix() @ v1) + v2
    rhs = v1 @ Lt @ v1 + w @ w
    return abs(lhs - rhs) / max(abs(lhs), abs(v1 @ Lt @ v1) + w @ w, 1e-300)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    idx = int(np.flatnonzero(a >= (1.0 - 1e-8) * a.max())[0])
    return v if v[idx] > 0 else -v


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenfields: list
    kernel: list
    kernel_eigenvalues: np.ndarray
    residuals: np.ndarray


def negative_spectrum(M: OperatorMatrix, kernel_threshold: float = 1e-6) -> SpectrumResult:
    """Eigenvalues below -kernel_threshold and the kernel |μ| <= kernel_threshold.

    Eigenfields are L²-orthonormal and sign-normalized to be positive at the
    leftmost maximum of their modulus.
    """
    if not M.symmetric:
        raise DomainError("negative_spectrum needs a symmetric operator")
    A = M.matrix
    h = M.grid.spacing
    try:
        ev, vec = sla.eigh(A, subset_by_value=(-np.inf, kernel_threshold))
    except sla.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    res = np.linalg.norm(A @ vec - vec * ev, axis=0) if ev.size else np.zeros(0)
    vec = np.column_stack([_sign_fix(vec[:, j]) for j in range(ev.size)]) if ev.size else vec
    vec = vec / np.sqrt(h)
    neg = ev < -kernel_threshold
    ker = np.abs(ev) <= kernel_threshold
    wrap = _wrapper(M)
    return SpectrumResult(
        eigenvalues=ev[neg],
        eigenfields=[wrap(vec[:, j]) for j in np.flatnonzero(neg)],
        kernel=[wrap(vec[:, j]) for j in np.flatnonzero(ker)],
        kernel_eigenvalues=ev[ker],
        residuals=res,
    )


def _wrapper(M: OperatorMatrix):
    if M.kind in ("H_block", "JH_block"):
        return lambda v: StateVector.from_stacked(M.grid, v)
    return lambda v: ScalarField(M.grid, v)


def kernel_dimension(M: OperatorMatrix, kernel_threshold: float = 1e-6) -> int:
    """Number of singular values of M below kernel_threshold."""
    if M.symmetric:
        ev = sla.eigh(M.matrix, eigvals_only=True, subset_by_value=(-kernel_threshold, kernel_threshold))
        return int(ev.size)
    sv = sla.svdvals(M.matrix)
    return int(np.sum(sv <= kernel_threshold))


class ProfileSampler:
    """Evaluates an eigenfield φ and φ' at arbitrary points with relative accuracy in the tails.

    Inside the bulk (|φ| above ``bulk_fraction`` of its maximum) the grid
    interpolant is used. Beyond the outermost such node the log-derivative
    w = φ'/φ solves the Riccati equation w' = 1 + λ² - V - w², integrated inward
    from far away where the decaying branch is attracting. This keeps
    e^{c x} φ(x) accurate even where φ itself is below round-off.
    """

    def __init__(self, phi: ScalarField, lam: float, source, reach: float, bulk_fraction: float = 1e-3):
        self.grid = phi.grid
        self.values = np.asarray(phi.values)
        self.source = as_source(source)
        self.lam = lam
        x = self.grid.x
        a = np.abs(self.values)
        bulk = np.flatnonzero(a >= bulk_fraction * a.max())
        self.y_right = float(x[bulk[-1]])
        self.y_left = float(x[bulk[0]])
        self.reach = max(reach, abs(self.y_right), abs(self.y_left)) + 1.0
        self._right = self._tail(self.y_right, +1)
        self._left = self._tail(self.y_left, -1)

    def _tail(self, y0, side):
        k2 = 1.0 + self.lam**2
        far = side * self.reach

        def rhs(s, z):
            # s runs along the outward coordinate y = side*s
            V = float(self.source.potential(np.array([side * s]))[0])
            w = z[0]
            return [k2 - V - w * w, w]

        V_far = float(self.source.potential(np.array([far]))[0])
        w_far = -np.sqrt(max(k2 - V_far, 1e-12))
        sol = solve_ivp(rhs, (abs(far), side * y0), [w_far, 0.0], method="DOP853",
                        rtol=1e-12, atol=1e-14, dense_output=True)
        if not sol.success:
            raise NumericalError(f"tail integration failed: {sol.message}")
        phi0 = float(self.grid.interpolate(self.values, np.array([y0]))[0])
        I0 = sol.sol(side * y0)[1]
        return y0, phi0, I0, sol.sol

    def __call__(self, y, derivative: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = self.grid.interpolate(self.values, y, derivative)
        for side, (y0, phi0, I0, dense) in ((1, self._right), (-1, self._left)):
            mask = side * y > side * y0
            if not np.any(mask):
                continue
            s = side * y[mask]
            w, I = dense(s)
            val = phi0 * np.exp(I - I0)
            # w is d(log φ)/ds with s = side*y, hence dφ/dy = side*w*φ
            out[mask] = val if derivative == 0 else side * w * val
        return out


def make_Y(phi_k: ScalarField, lambda_k: float, boost: BoostFrame, sign: int, source) -> StateVector:
    """Sample Y_k^± on the grid (sign = +1 or -1)."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    if not lambda_k > 0:
        raise DomainError("lambda_k must be positive")
    grid = phi_k.grid
    g, b = boost.gamma, boost.beta
    x = grid.x
    sampler = ProfileSampler(phi_k, lambda_k, source, reach=g * grid.half_width)
    ph = sampler(g * x)
    dph = sampler(g * x, derivative=1)
    weight = np.exp(-sign * g * lambda_k * b * x)
    first = weight * ph
    second = weight * (-g * b * dph + sign * g * lambda_k * ph)
    return StateVector.from_arrays(grid, first, second)


def make_Phi0(phi0: ScalarField, boost: BoostFrame) -> StateVector:
    grid = phi0.grid
    g, b = boost.gamma, boost.beta
    y = g * grid.x
    first = grid.interpolate(phi0.values, y)
    second = -g * b * grid.interpolate(phi0.values, y, derivative=1)
    return StateVector.from_arrays(grid, first, second)


def h_negative_count(H: OperatorMatrix, kernel_threshold: float = 1e-6, expected_kbar: int | None = None):
    """Negative eigenvectors Υ_m of H scaled so that <HΥ_m, Υ_m> = -1.

    Returns (mbar, Upsilons, mus) with H Υ_m = -μ_m² Υ_m.
    """
    h = H.grid.spacing
    ev, vec = sla.eigh(H.matrix, subset_by_value=(-np.inf, -kernel_threshold))
    ups, mus = [], []
    for j in range(ev.size):
        v = _sign_fix(vec[:, j])
        v = v / np.sqrt(h * (-ev[j]))
        ups.append(StateVector.from_stacked(H.grid, v))
        mus.append(np.sqrt(-ev[j]))
    mbar = int(ev.size)
    if expected_kbar is not None and mbar != expected_kbar:
        raise LemmaViolation(f"H has {mbar} negative eigenvalues but L has {expected_kbar}")
    return mbar, ups, np.array(mus)


@dataclass(eq=False)
class SpectralBundle:
    source: object
    grid: Grid1D
    boost: BoostFrame
    kbar: int
    lambdas: np.ndarray
    phis: list
    kernel: list
    Y_plus: list = field(default_factory=list)
    Y_minus: list = field(default_factory=list)
    Phi0: list = field(default_factory=list)
    Z_plus: list = field(default_factory=list)
    Z_minus: list = field(default_factory=list)
    Upsilons: list = field(default_factory=list)
    mus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mbar: int = 0
    H: OperatorMatrix | None = None

    @property
    def ellbar(self) -> int:
        return len(self.kernel)

    def JH(self) -> OperatorMatrix:
        return assemble_JH(self.source, self.boost, self.grid)


def build_Z(bundle: SpectralBundle) -> SpectralBundle:
    """Fill Z_k^± = H Y_k^±."""
    H = bundle.H.matrix
    g = bundle.grid
    bundle.Z_plus = [StateVector.from_stacked(g, H @ Y.stacked()) for Y in bundle.Y_plus]
    bundle.Z_minus = [StateVector.from_stacked(g, H @ Y.stacked()) for Y in bundle.Y_minus]
    return bundle


def spectral_bundle(source, grid: Grid1D, boost: BoostFrame | None = None,
                    kernel_threshold: float = 1e-6, with_upsilons: bool = True) -> SpectralBundle:
    """Eigen-data of L and the boosted objects Y, Φ⁰, Z, Υ for one soliton."""
    boost = boost or BoostFrame(0.0)
    src = as_source(source)
    spec = negative_spectrum(assemble_L(src, grid), kernel_threshold)
    lambdas = np.sqrt(-spec.eigenvalues)
    bundle = SpectralBundle(src, grid, boost, len(lambdas), lambdas, spec.eigenfields, spec.kernel)
    bundle.Y_plus = [make_Y(ph, lam, boost, +1, src) for ph, lam in zip(spec.eigenfields, lambdas)]
    bundle.Y_minus = [make_Y(ph, lam, boost, -1, src) for ph, lam in zip(spec.eigenfields, lambdas)]
    bundle.Phi0 = [make_Phi0(k, boost) for k in spec.kernel]
    bundle.H = assemble_H(src, boost, grid)
    build_Z(bundle)
    if with_upsilons:
        bundle.mbar, bundle.Upsilons, bundle.mus = h_negative_count(bundle.H, kernel_threshold)
    return bundle


def _pair(grid, a, b):
    return grid.spacing * float(a @ b)


def gram_determinant(vectors, grid) -> float:
    """Determinant of the Gram matrix of the L²-normalized vectors (1 for orthonormal, 0 if dependent)."""
    arr = np.column_stack([v.stacked() if isinstance(v, StateVector) else v.values for v in vectors])
    arr = arr / np.linalg.norm(arr, axis=0)
    return float(np.linalg.det(arr.T @ arr))


@dataclass
class EigenrelationReport:
    residual_plus: np.ndarray
    residual_minus: np.ndarray
    ortho_plus: np.ndarray
    ortho_minus: np.ndarray
    gram_det_Y: float
    gram_det_Z: float
    z_phi0: np.ndarray
    jh_eigenvalues: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        tol = self.tolerance
        return bool(
            np.all(self.residual_plus <= tol) and np.all(self.residual_minus <= tol)
            and np.all(self.ortho_plus <= tol) and np.all(self.ortho_minus <= tol)
            and np.all(self.z_phi0 <= tol) and self.gram_det_Y > 0 and self.gram_det_Z > 0
        )


def verify_eigenrelation(bundle: SpectralBundle, tolerance: float = 1e-6,
                         cross_check: bool = False) -> EigenrelationReport:
    """Residuals of JH Y = ±(λ/γ) Y, the H-orthogonality of equal-sign modes, and Gram checks.

    Orthogonality entries are scaled by |HY_k|·|Y_k'| and the Z/Φ⁰ overlaps by
    |Z|·|Φ⁰|. With ``cross_check`` the eigenvalue of JH closest to λ/γ is also
    found by shift-invert Arnoldi on the assembled matrix.
    """
    g = bundle.grid
    JH = bundle.JH().matrix
    H = bundle.H.matrix
    gam = bundle.boost.gamma
    k = bundle.kbar

    def rel_res(Y, s, lam):
        y = Y.stacked()
        return np.linalg.norm(JH @ y - s * lam / gam * y) / np.linalg.norm(y)

    rp = np.array([rel_res(Y, 1, lam) for Y, lam in zip(bundle.Y_plus, bundle.lambdas)])
    rm = np.array([rel_res(Y, -1, lam) for Y, lam in zip(bundle.Y_minus, bundle.lambdas)])

    def ortho(Ys):
        out = np.zeros((k, k))
        for i in range(k):
            hy = H @ Ys[i].stacked()
            for j in range(k):
                y = Ys[j].stacked()
                out[i, j] = abs(hy @ y) / (np.linalg.norm(hy) * np.linalg.norm(y))
        return out

    zphi = np.array([
        abs(Z.stacked() @ P.stacked()) / (np.linalg.norm(Z.stacked()) * np.linalg.norm(P.stacked()))
        for Z in bundle.Z_plus + bundle.Z_minus for P in bundle.Phi0
    ])
    jh_eigs = np.zeros(0)
    if cross_check:
        vals = []
        for lam in bundle.lambdas:
            mu = spla.eigs(JH, k=1, sigma=lam / gam, return_eigenvectors=False)
            vals.append(float(np.real(mu[0])))
        jh_eigs = np.array(vals)
    return EigenrelationReport(
        residual_plus=rp,
        residual_minus=rm,
        ortho_plus=ortho(bundle.Y_plus),
        ortho_minus=ortho(bundle.Y_minus),
        gram_det_Y=gram_determinant(bundle.Y_plus + bundle.Y_minus, g),
        gram_det_Z=gram_determinant(bundle.Z_plus + bundle.Z_minus, g),
        z_phi0=zphi,
        jh_eigenvalues=jh_eigs,
        tolerance=tolerance,
    )
