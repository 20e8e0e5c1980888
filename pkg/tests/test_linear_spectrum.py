import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlkg_lab.bound_states import SandboxPotential, ground_state_closed_form, sandbox_depth_for_kbar
from nlkg_lab.errors import DomainError
from nlkg_lab.fields import Grid1D, inner_pair
from nlkg_lab.linear_spectrum import (BoostFrame, assemble_H, assemble_JH, assemble_L, gram_determinant,
                                      h_negative_count, kernel_dimension, negative_spectrum,
                                      quadratic_form_identity_residual, spectral_bundle, verify_eigenrelation)

GRID = Grid1D(25.0, 512)


def sech(x):
    return 1.0 / np.cosh(x)


def pt_levels(depth):
    """Pöschl-Teller levels of -d² + 1 - depth·sech² below the continuum edge 1."""
    nu = 0.5 * (-1 + math.sqrt(1 + 4 * depth))
    return np.array([1 - (nu - n) ** 2 for n in range(int(math.ceil(nu))) if n < nu])


def test_cubic_ground_state_spectrum_matches_poschl_teller():
    q = ground_state_closed_form(3.0, GRID)
    spec = negative_spectrum(assemble_L(q, GRID))
    assert spec.eigenvalues.size == 1
    assert -spec.eigenvalues[0] == pytest.approx(3.0, abs=1e-10)
    assert len(spec.kernel) == 1
    # φ₁ ∝ sech², kernel ∝ q' ∝ sech·tanh
    phi = spec.eigenfields[0].values
    ref = sech(GRID.x) ** 2
    ref /= math.sqrt(GRID.spacing * ref @ ref)
    assert np.max(np.abs(phi - ref)) < 1e-9
    k = spec.kernel[0].values
    dq = sech(GRID.x) * np.tanh(GRID.x)
    dq /= math.sqrt(GRID.spacing * dq @ dq)
    assert min(np.max(np.abs(k - dq)), np.max(np.abs(k + dq))) < 1e-9


@pytest.mark.parametrize("kbar", [2, 3])
def test_sandbox_levels_match_poschl_teller(kbar):
    depth = sandbox_depth_for_kbar(kbar)
    spec = negative_spectrum(assemble_L(SandboxPotential(depth), GRID))
    levels = pt_levels(depth)
    assert spec.eigenvalues.size == kbar
    assert np.allclose(np.sort(spec.eigenvalues), levels[levels < 0], atol=1e-9)
    assert len(spec.kernel) == 0


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.6])
def test_eigenrelation_and_jh_rates(beta):
    b = spectral_bundle(ground_state_closed_form(3.0, GRID), GRID, BoostFrame(beta))
    rep = verify_eigenrelation(b)
    assert rep.passed
    assert b.mbar == b.kbar == 1
    # JH has ±λ/γ in its spectrum
    ev = np.linalg.eigvals(b.JH().matrix)
    rate = math.sqrt(3.0) / b.boost.gamma
    assert np.min(np.abs(ev - rate)) < 1e-6
    assert np.min(np.abs(ev + rate)) < 1e-6


@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_y_modes_are_isotropic_and_z_pairs_are_nondegenerate(beta):
    b = spectral_bundle(ground_state_closed_form(3.0, GRID), GRID, BoostFrame(beta))
    Yp, Ym = b.Y_plus[0], b.Y_minus[0]
    assert abs(inner_pair(b.Z_plus[0], Yp)) < 1e-8 * math.sqrt(inner_pair(Yp, Yp) * inner_pair(b.Z_plus[0], b.Z_plus[0]))
    assert abs(inner_pair(b.Z_plus[0], Ym)) > 1e-2
    assert abs(inner_pair(b.Z_plus[0], b.Phi0[0])) < 1e-8
    assert gram_determinant(b.Y_plus + b.Y_minus, GRID) > 0.1


def test_y_plus_closed_form():
    beta = 0.4
    g = 1 / math.sqrt(1 - beta**2)
    lam = math.sqrt(3)
    b = spectral_bundle(ground_state_closed_form(3.0, GRID), GRID, BoostFrame(beta))
    Y = b.Y_plus[0]
    x = GRID.x
    w = np.exp(-g * lam * beta * x)
    shape = w * sech(g * x) ** 2
    c = (Y.first.values @ shape) / (shape @ shape)
    first = c * w * sech(g * x) ** 2
    second = c * w * (-g * beta * (-2 * sech(g * x) ** 2 * np.tanh(g * x)) + g * lam * sech(g * x) ** 2)
    scale = np.max(np.abs(Y.stacked()))
    assert np.max(np.abs(Y.first.values - first)) < 1e-8 * scale
    assert np.max(np.abs(Y.second.values - second)) < 1e-8 * scale


def test_upsilon_normalization():
    b = spectral_bundle(ground_state_closed_form(3.0, GRID), GRID, BoostFrame(0.6))
    U = b.Upsilons[0].stacked()
    assert GRID.spacing * U @ b.H.matrix @ U == pytest.approx(-1.0, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.9, 0.9), st.integers(0, 2**31 - 1))
def test_h_quadratic_form_identity(beta, seed):
    g = Grid1D(15.0, 96)
    q = ground_state_closed_form(3.0, g)
    rng = np.random.default_rng(seed)
    bumps = np.array([np.exp(-(g.x - c) ** 2) for c in rng.uniform(-5, 5, 4)])
    V = np.concatenate([rng.standard_normal(4) @ bumps, rng.standard_normal(4) @ bumps])
    assert quadratic_form_identity_residual(q, BoostFrame(beta), g, V) < 1e-10


@pytest.mark.parametrize("beta", [-0.8, 0.0, 0.8])
def test_h_negative_count_equals_kbar(beta):
    q = ground_state_closed_form(3.0, GRID)
    mbar, ups, mus = h_negative_count(assemble_H(q, BoostFrame(beta), GRID))
    assert mbar == 1
    assert kernel_dimension(assemble_L(q, GRID)) == 1


def test_boost_rejects_superluminal():
    with pytest.raises(DomainError):
        BoostFrame(1.0)
    with pytest.raises(DomainError):
        negative_spectrum(assemble_JH(ground_state_closed_form(3.0, GRID), BoostFrame(0.2), GRID))
