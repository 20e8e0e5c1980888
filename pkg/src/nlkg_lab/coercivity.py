"""Constrained coercivity of L and H and the objects of the H-coercivity argument.

Every constant is the smallest generalized eigenvalue of the quadratic form
against the discrete energy Gram matrix, restricted to an explicit orthonormal
basis of the constraint complement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .errors import ConditioningError, DomainError
from .fields import Grid1D, ScalarField, StateVector, energy_gram
from .linear_spectrum import BoostFrame, OperatorMatrix, SpectralBundle, assemble_L, spectral_bundle

FLAVORS = ("plain_l2", "h_weighted")


def _arr(v):
    return v.stacked() if isinstance(v, StateVector) else np.asarray(v.values)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Directions c with <V, c> = 0 (plain) or <HV, c> = 0 (h_weighted, realized as <V, Hc> = 0)."""

    vectors: tuple
    flavor: str = "plain_l2"
    H: OperatorMatrix | None = None

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if self.flavor not in FLAVORS:
            raise DomainError(f"unknown constraint flavor {self.flavor!r}")
        if self.flavor == "h_weighted" and self.H is None:
            raise DomainError("h_weighted constraints need the operator H")

    def columns(self) -> np.ndarray:
        if not self.vectors:
            return np.zeros((0, 0))
        C = np.column_stack([_arr(v) for v in self.vectors])
        if self.flavor == "h_weighted":
            C = self.H.matrix @ C
        return C


def _combine(sets, size):
    cols = [s.columns() for s in sets if s.vectors]
    if not cols:
        return np.zeros((size, 0))
    C = np.column_stack(cols)
    Cn = C / np.linalg.norm(C, axis=0)
    det = np.linalg.det(Cn.T @ Cn)
    if det <= 1e-10:
        raise ConditioningError(f"constraint vectors are nearly dependent (normalized Gram det {det:.2e})")
    return C


@dataclass(eq=False)
class CoercivityReport:
    constant_c: float
    achieved_minimizer: object
    constraint_residuals: np.ndarray
    lemma_violation: bool
    label: str = ""


def constrained_minimum(Q: np.ndarray, G: np.ndarray, C: np.ndarray):
    """min over {V : C^T V = 0} of V^T Q V / V^T G V, with its minimizer.

    The complement basis is the trailing block of a complete QR factorization
    of C, so the projected pencil stays symmetric and well scaled.
    """
    m = C.shape[1]
    if m:
        Qf, _ = sla.qr(C, mode="full")
        B = Qf[:, m:]
    else:
        B = np.eye(Q.shape[0])
    A = B.T @ Q @ B
    M = B.T @ G @ B
    ev, vec = sla.eigh(0.5 * (A + A.T), 0.5 * (M + M.T), subset_by_index=[0, 0])
    return float(ev[0]), B @ vec[:, 0]


def _report(Q, G, sets, grid, wrap, label, tol):
    C = _combine(sets, Q.shape[0])
    c, v = constrained_minimum(Q, G, C)
    v = v / np.sqrt(v @ G @ v)
    res = np.array([abs(C[:, j] @ v) / np.linalg.norm(C[:, j]) for j in range(C.shape[1])])
    return CoercivityReport(c, wrap(v), res, bool(c <= tol), label)


def _h1_gram(grid: Grid1D) -> np.ndarray:
    return grid.spacing * (np.eye(grid.n_points) - grid.laplacian_matrix())


def coercivity_L(L: OperatorMatrix, phis, kernel, grid: Grid1D | None = None, tol: float = 1e-10) -> CoercivityReport:
    """Smallest (Lv, v)/‖v‖²_{H¹} over v orthogonal to every φ_k and φ⁰_ℓ."""
    grid = grid or L.grid
    sets = [ConstraintSet(phis), ConstraintSet(kernel)]
    return _report(grid.spacing * L.matrix, _h1_gram(grid), sets, grid,
                   lambda v: ScalarField(grid, v), "L", tol)


def coercivity_H(H: OperatorMatrix, Upsilons, Phi0s, tol: float = 1e-10) -> CoercivityReport:
    """Smallest <HV, V>/‖V‖² over V L²-orthogonal to every Υ_m and Φ⁰_ℓ."""
    g = H.grid
    sets = [ConstraintSet(Upsilons), ConstraintSet(Phi0s)]
    return _report(g.spacing * H.matrix, energy_gram(g), sets, g,
                   lambda v: StateVector.from_stacked(g, v), "H", tol)


def coercivity_prop(H: OperatorMatrix, Z_plus, Z_minus, Phi0s, tol: float = 1e-10) -> CoercivityReport:
    """Smallest <HV, V>/‖V‖² over V with <HV, Y_k^±> = 0 and <V, Φ⁰_ℓ> = 0."""
    g = H.grid
    sets = [ConstraintSet(list(Z_plus) + list(Z_minus)), ConstraintSet(Phi0s)]
    return _report(g.spacing * H.matrix, energy_gram(g), sets, g,
                   lambda v: StateVector.from_stacked(g, v), "prop", tol)


def necessity_checks(bundle: SpectralBundle, tol: float = 1e-10) -> dict:
    """Constrained minima with one constraint family removed at a time.

    Keys name the removed family. A value below -tol means a negative direction
    appeared; a value within tol of zero means coercivity degenerates to a null
    direction without turning negative.
    """
    g = bundle.grid
    L = assemble_L(bundle.source, g)
    QL, GL = g.spacing * L.matrix, _h1_gram(g)
    QH, GH = g.spacing * bundle.H.matrix, energy_gram(g)
    n2 = 2 * g.n_points

    def run(Q, G, vecs, size):
        C = _combine([ConstraintSet(vecs)], size)
        return constrained_minimum(Q, G, C)[0]

    out = {
        "L_without_phi": run(QL, GL, bundle.kernel, g.n_points),
        "L_without_kernel": run(QL, GL, bundle.phis, g.n_points),
        "H_without_upsilon": run(QH, GH, bundle.Phi0, n2),
        "H_without_phi0": run(QH, GH, bundle.Upsilons, n2),
        "prop_without_Z": run(QH, GH, bundle.Phi0, n2),
        "prop_without_phi0": run(QH, GH, bundle.Z_plus + bundle.Z_minus, n2),
        "prop_without_Z1_plus": run(QH, GH, bundle.Z_plus[1:] + bundle.Z_minus + bundle.Phi0, n2),
    }
    out["tolerance"] = tol
    return out


@dataclass(eq=False)
class ProofDiagnostics:
    G_plus: np.ndarray
    G_minus: np.ndarray
    Ycal_plus: np.ndarray
    Ycal_minus: np.ndarray
    gram_identity_plus: float
    gram_identity_minus: float
    G_eigs_plus: np.ndarray
    G_eigs_minus: np.ndarray
    a_constant: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _project_out(Y, basis, grid):
    """L² projection of Y onto span(basis); returns (coefficients, remainder)."""
    B = np.column_stack(basis)
    h = grid.spacing
    coef = np.linalg.solve(h * (B.T @ B), h * (B.T @ Y))
    return coef, Y - B @ coef


def _ratio_sup(Mfull, kbar, seed=0, starts=16):
    """sup over c of sqrt(q+(c) q-(c)) / c^T M c by multi-start local optimization."""
    P = Mfull[:, :kbar] @ np.linalg.solve(Mfull[:kbar, :kbar], Mfull[:kbar, :])
    Mm = Mfull[:, kbar:] @ np.linalg.solve(Mfull[kbar:, kbar:], Mfull[kbar:, :])

    def neg_ratio(c):
        den = c @ Mfull @ c
        return -np.sqrt(max(c @ P @ c, 0.0) * max(c @ Mm @ c, 0.0)) / den

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        c0 = rng.standard_normal(Mfull.shape[0])
        r = minimize(neg_ratio, c0, method="Nelder-Mead",
                     options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        r = minimize(neg_ratio, r.x, method="BFGS", options={"gtol": 1e-12})
        best = max(best, -float(r.fun))
    return best


def proof_diagnostics(bundle: SpectralBundle, seed: int = 0) -> ProofDiagnostics:
    """G^±, the coefficient matrices 𝒴^± of the Υ-components of Y_k^±, and the constant a."""
    g = bundle.grid
    H = bundle.H.matrix
    h = g.spacing
    k, m = bundle.kbar, bundle.mbar
    basis = [u.stacked() for u in bundle.Upsilons] + [p.stacked() for p in bundle.Phi0]
    tilde, Ycal = {}, {}
    for sgn, Ys in (("+", bundle.Y_plus), ("-", bundle.Y_minus)):
        coefs, rems = [], []
        for Y in Ys:
            c, r = _project_out(Y.stacked(), basis, g)
            coefs.append(c[:m])
            rems.append(r)
        Ycal[sgn] = np.array(coefs).reshape(k, m)
        tilde[sgn] = np.column_stack(rems)
    G = {s: h * (tilde[s].T @ H @ tilde[s]) for s in "+-"}
    G = {s: 0.5 * (G[s] + G[s].T) for s in "+-"}
    ident = {s: np.linalg.norm(G[s] - Ycal[s] @ Ycal[s].T) / np.linalg.norm(G[s]) for s in "+-"}
    eigs = {s: np.linalg.eigvalsh(G[s]) for s in "+-"}
    failures = []
    for s in "+-":
        if ident[s] > 1e-8:
            failures.append(f"G{s} identity defect {ident[s]:.3e}")
        if eigs[s].min() <= 0:
            failures.append(f"G{s} not positive definite (min eigenvalue {eigs[s].min():.3e})")
        if m != k or abs(np.linalg.det(Ycal[s])) < 1e-12:
            failures.append(f"Y{s} coefficient matrix is not invertible")
    F = np.column_stack([tilde["+"], tilde["-"]])
    M = h * (F.T @ H @ F)
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M).min() <= 0:
        failures.append("the H form is not positive on span(Y~)")
        a = np.nan
    else:
        a = _ratio_sup(M, k, seed=seed)
        if not a < 1:
            failures.append(f"contraction constant a = {a:.6f} is not below 1")
    return ProofDiagnostics(G["+"], G["-"], Ycal["+"], Ycal["-"], ident["+"], ident["-"],
                            eigs["+"], eigs["-"], float(a), failures)


def coercivity_row(source, grid: Grid1D, beta: float, threshold: float = 1e-3, seed: int = 0) -> dict:
    """One row {beta, kbar, c_L, c_H, c_prop, a_constant, pass} of a β sweep."""
    b = spectral_bundle(source, grid, BoostFrame(beta))
    L = assemble_L(b.source, grid)
    cL = coercivity_L(L, b.phis, b.kernel, grid).constant_c
    cH = coercivity_H(b.H, b.Upsilons, b.Phi0).constant_c
    cP = coercivity_prop(b.H, b.Z_plus, b.Z_minus, b.Phi0).constant_c
    pd = proof_diagnostics(b, seed=seed)
    ok = min(cL, cH, cP) >= threshold and pd.passed
    return {"beta": float(beta), "kbar": int(b.kbar), "c_L": cL, "c_H": cH, "c_prop": cP,
            "a_constant": pd.a_constant, "pass": bool(ok)}
