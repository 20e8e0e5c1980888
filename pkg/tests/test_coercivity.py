import math

import numpy as np
import pytest
import scipy.linalg as sla

from nlkg_lab.coercivity import (ConstraintSet, coercivity_H, coercivity_L, coercivity_prop, constrained_minimum,
                                 necessity_checks, proof_diagnostics)
from nlkg_lab.errors import ConditioningError, DomainError
from nlkg_lab.fields import Grid1D, ScalarField
from nlkg_lab.linear_spectrum import assemble_L

# Frozen from an independent route: fourth-order finite differences with
# analytic φ, q', Y^± on 1200 interior points of (-25, 25), complement basis
# from scipy.linalg.null_space. Agreement with the spectral route is ~2e-6.
FD4_ORACLE = {
    0.0: {"c_L": 0.477227, "c_H": 0.477227, "c_prop": 0.477227},
    0.4: {"c_H": 0.358640, "c_prop": 0.366284},
}


def _constants(b):
    g = b.grid
    return {
        "c_L": coercivity_L(assemble_L(b.source, g), b.phis, b.kernel, g).constant_c,
        "c_H": coercivity_H(b.H, b.Upsilons, b.Phi0).constant_c,
        "c_prop": coercivity_prop(b.H, b.Z_plus, b.Z_minus, b.Phi0).constant_c,
    }


@pytest.mark.parametrize("beta", sorted(FD4_ORACLE))
def test_constants_match_finite_difference_oracle(bundles, beta):
    got = _constants(bundles("ground", beta))
    for key, val in FD4_ORACLE[beta].items():
        assert got[key] == pytest.approx(val, abs=2e-5), key


def test_constants_are_grid_converged(bundles):
    coarse = _constants(bundles("ground", 0.8))
    fine = _constants(bundles("ground", 0.8, 25.0, 1024))
    for k in coarse:
        assert coarse[k] == pytest.approx(fine[k], abs=1e-8)


def test_minimizer_satisfies_constraints(bundles):
    b = bundles("ground", 0.4)
    rep = coercivity_prop(b.H, b.Z_plus, b.Z_minus, b.Phi0)
    assert np.max(rep.constraint_residuals) < 1e-10
    assert not rep.lemma_violation


def test_constrained_minimum_on_a_diagonal_form():
    Q = np.diag([-1.0, 2.0, 3.0])
    G = np.eye(3)
    c, v = constrained_minimum(Q, G, np.array([[1.0], [0.0], [0.0]]))
    assert c == pytest.approx(2.0)
    assert abs(v[0]) < 1e-12


def test_dependent_constraints_are_rejected(bundles):
    b = bundles("ground", 0.0)
    with pytest.raises(ConditioningError):
        coercivity_L(assemble_L(b.source, b.grid), b.phis + b.phis, b.kernel, b.grid)
    with pytest.raises(DomainError):
        ConstraintSet(b.Phi0, "h_weighted")


def test_necessity_negative_directions_appear(bundles):
    b = bundles("ground", 0.4)
    nec = necessity_checks(b)
    assert nec["L_without_phi"] < -1.0
    assert nec["H_without_upsilon"] < -0.1
    assert nec["prop_without_Z"] < -0.1


def test_removing_kernel_constraint_leaves_a_null_direction(bundles):
    # The kernel direction is a null direction of the form, so the minimum is 0, not negative.
    b = bundles("ground", 0.4)
    nec = necessity_checks(b)
    for key in ("L_without_kernel", "H_without_phi0", "prop_without_phi0"):
        assert abs(nec[key]) < 1e-9, key


def test_dropping_z1_plus_leaves_isotropic_y_minus(bundles):
    b = bundles(2, 0.5)
    nec = necessity_checks(b)
    assert abs(nec["prop_without_Z1_plus"]) < 1e-9


def principal_angle_a(b):
    """a = (1 + cos θ_min)/2, θ_min the smallest principal angle between the H-projected Y^+ and Y^- spans."""
    g, H, h = b.grid, b.H.matrix, b.grid.spacing
    basis = np.column_stack([u.stacked() for u in b.Upsilons] + [p.stacked() for p in b.Phi0])
    F = []
    for Ys in (b.Y_plus, b.Y_minus):
        Y = np.column_stack([y.stacked() for y in Ys])
        coef = np.linalg.lstsq(basis, Y, rcond=None)[0]
        F.append(Y - basis @ coef)
    F = np.column_stack(F)
    M = h * F.T @ H @ F
    R = sla.cholesky(0.5 * (M + M.T))
    k = b.kbar
    theta = sla.subspace_angles(R[:, :k], R[:, k:])
    return (1 + math.cos(theta.min())) / 2


@pytest.mark.parametrize("case", [("ground", 0.4), ("ground", 0.8), (2, 0.5)])
def test_a_constant_matches_principal_angle_oracle(bundles, case):
    b = bundles(*case)
    pd = proof_diagnostics(b)
    assert pd.a_constant == pytest.approx(principal_angle_a(b), abs=1e-6)
    assert max(pd.gram_identity_plus, pd.gram_identity_minus) < 1e-8


def test_a_constant_is_undefined_at_rest(bundles):
    # At β = 0 the H-projections of Y^+ and Y^- coincide up to sign.
    b = bundles("ground", 0.0)
    pd = proof_diagnostics(b)
    assert math.isnan(pd.a_constant)
    assert not pd.passed
